"""HHR-GNN layers, the full classifier, and a GCN baseline.

One layer maps H (N x d_in) to N x (p+1)*d:

    h_r   = relu(A_r H W_r)                      r = 0..p, A_0 = I
    alpha = sigmoid(h_0[i] S_r h_r[i]^T)         r = 1..p, one slice S_r each
    H'    = [h_0 | alpha_1 * h_1 | ... | alpha_p * h_p]

A bias-free linear classifier sits on top of the last layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .sparsela import CompiledRelation, RelationSpec

FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    relations: list[RelationSpec]
    layer_dims: tuple[int, ...] = (32, 8)
    num_classes: int = 2
    dropout: float = 0.6
    seed: int = 0

    def __post_init__(self):
        self.relations = [r if isinstance(r, RelationSpec) else RelationSpec.from_json(r)
                          for r in self.relations]
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if not self.relations or not self.relations[0].is_identity:
            raise ValueError("relations[0] must be the self relation (hops=0)")
        if len(self.relations) < 2:
            raise ValueError("need at least one relation besides self")
        if not self.layer_dims or min(self.layer_dims) < 1:
            raise ValueError("layer_dims must be a non-empty list of positive widths")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def num_hops(self) -> int:
        """p: number of relations besides self."""
        return len(self.relations) - 1

    @property
    def relation_names(self) -> list[str]:
        return [r.name for r in self.relations]

    def to_json(self) -> dict:
        return {"relations": [r.to_json() for r in self.relations],
                "layer_dims": list(self.layer_dims), "num_classes": self.num_classes,
                "dropout": self.dropout, "seed": self.seed}

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        return cls(relations=[RelationSpec.from_json(r) for r in d["relations"]],
                   layer_dims=tuple(d["layer_dims"]), num_classes=d["num_classes"],
                   dropout=d.get("dropout", 0.6), seed=d.get("seed", 0))


@dataclass
class LayerParams:
    W: list[np.ndarray]  # p+1 projections, d_in x d
    ntn: list[np.ndarray]  # p slices, d x d


@dataclass
class ModelParams:
    layers: list[LayerParams]
    classifier: np.ndarray

    def named(self) -> dict[str, np.ndarray]:
        out = {}
        for k, layer in enumerate(self.layers):
            for r, w in enumerate(layer.W):
                out[f"layer{k}.W{r}"] = w
            for r, s in enumerate(layer.ntn, start=1):
                out[f"layer{k}.ntn{r}"] = s
        out["classifier"] = self.classifier
        return out

    @classmethod
    def from_named(cls, named: dict[str, np.ndarray]) -> "ModelParams":
        layers = []
        k = 0
        while f"layer{k}.W0" in named:
            W = []
            while f"layer{k}.W{len(W)}" in named:
                W.append(named[f"layer{k}.W{len(W)}"])
            ntn = [named[f"layer{k}.ntn{r}"] for r in range(1, len(W))]
            layers.append(LayerParams(W, ntn))
            k += 1
        return cls(layers, named["classifier"])

    def copy(self) -> "ModelParams":
        return ModelParams.from_named({k: v.copy() for k, v in self.named().items()})


@dataclass
class RelationScoreReport:
    """Relation-scores per layer: ``alphas[k][i, r-1]`` for r = 1..p.

    The self score is the constant 1 and is not stored.
    """
    relation_names: list[str]
    alphas: list[np.ndarray] = field(default_factory=list)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(config: ModelConfig, feature_dim: int) -> ModelParams:
    rng = np.random.default_rng(config.seed)
    p = config.num_hops
    layers = []
    d_in = feature_dim
    for d in config.layer_dims:
        W = [glorot(rng, d_in, d) for _ in range(p + 1)]
        ntn = [glorot(rng, d, d) for _ in range(p)]
        layers.append(LayerParams(W, ntn))
        d_in = (p + 1) * d
    return ModelParams(layers, glorot(rng, d_in, config.num_classes))


# ---------------------------------------------------------------------------
# Forward pieces

def hop_representation(H_prev: dc.Node, relation: CompiledRelation | None, W_r: dc.Node) -> dc.Node:
    """relu(A_r H W_r); ``relation`` None or hops=0 means A_r = I."""
    if relation is None or relation.spec.is_identity:
        return dc.relu(dc.matmul(H_prev, W_r))
    if relation.matrix.shape != (H_prev.shape[0],) * 2:
        raise ValueError(f"relation {relation.name!r} has shape {relation.matrix.shape}, "
                         f"expected {(H_prev.shape[0],) * 2}")
    return dc.relu(dc.matmul(dc.spmm(relation.matrix, H_prev), W_r))


def relation_scores(h0: dc.Node, hop_reps: Sequence[dc.Node],
                    ntn_slices: Sequence[dc.Node]) -> list[dc.Node]:
    """One N x 1 sigmoid bilinear score column per hop representation."""
    if len(ntn_slices) != len(hop_reps):
        raise ValueError(f"{len(ntn_slices)} NTN slices for {len(hop_reps)} relations")
    return [dc.sigmoid(dc.batched_bilinear(h0, hr, s)) for hr, s in zip(hop_reps, ntn_slices)]


def hhr_layer_forward(layer: dict, relations: Sequence[CompiledRelation], H_prev: dc.Node,
                      training: bool = False, dropout: float = 0.0, rng=None):
    """Returns (H, alpha) with H of width (p+1)*d and alpha of shape N x p.

    ``layer`` holds tape nodes under keys ``"W"`` (p+1) and ``"ntn"`` (p).
    """
    W, ntn = layer["W"], layer["ntn"]
    if len(W) != len(relations):
        raise ValueError(f"{len(W)} projections for {len(relations)} relations")
    x = dc.dropout(H_prev, dropout, training, rng)
    hops = [hop_representation(x, rel, w) for rel, w in zip(relations, W)]
    alpha = relation_scores(hops[0], hops[1:], ntn)
    blocks = [hops[0]] + [dc.row_scale(h, a) for h, a in zip(hops[1:], alpha)]
    return dc.concat_cols(blocks), dc.concat_cols(alpha)


def params_on_tape(tape: dc.Tape, params: ModelParams) -> tuple[list[dict], dc.Node]:
    layers = []
    for k, layer in enumerate(params.layers):
        layers.append({
            "W": [tape.variable(w, f"layer{k}.W{r}") for r, w in enumerate(layer.W)],
            "ntn": [tape.variable(s, f"layer{k}.ntn{r}") for r, s in enumerate(layer.ntn, 1)],
        })
    return layers, tape.variable(params.classifier, "classifier")


def model_forward(tape: dc.Tape, params: ModelParams, relations: Sequence[CompiledRelation],
                  X, labels=None, mask=None, training: bool = False,
                  dropout: float = 0.0, rng=None, relation_names=None):
    """Full forward pass. Returns (loss or None, logits, RelationScoreReport)."""
    layers, clf = params_on_tape(tape, params)
    H = tape.constant(X)
    names = relation_names or [r.name for r in relations]
    report = RelationScoreReport(list(names))
    for layer in layers:
        H, alpha = hhr_layer_forward(layer, relations, H, training, dropout, rng)
        report.alphas.append(alpha.value.copy())
    logits = dc.matmul(H, clf)
    loss = None
    if mask is not None:
        loss = dc.softmax_cross_entropy(logits, labels, mask)
    return loss, logits, report


def predict(params: ModelParams, relations, X) -> tuple[np.ndarray, RelationScoreReport]:
    """Eval-mode logits and relation-scores."""
    _, logits, report = model_forward(dc.Tape(), params, relations, X)
    return logits.value, report


# ---------------------------------------------------------------------------
# GCN baseline

def gcn_layer_forward(adj: CompiledRelation, H_prev: dc.Node, W: dc.Node,
                      activation: str = "relu") -> dc.Node:
    return dc.activation(dc.matmul(dc.spmm(adj.matrix, H_prev), W), activation)


def init_gcn_params(feature_dim: int, hidden: int, num_classes: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    return {"gcn.W0": glorot(rng, feature_dim, hidden),
            "gcn.W1": glorot(rng, hidden, num_classes)}


def gcn_forward(tape: dc.Tape, params: dict, adj: CompiledRelation, X, labels=None,
                mask=None, training=False, dropout=0.0, rng=None):
    """Two-layer GCN: relu hidden layer, linear output layer."""
    W0 = tape.variable(params["gcn.W0"], "gcn.W0")
    W1 = tape.variable(params["gcn.W1"], "gcn.W1")
    H = dc.dropout(tape.constant(X), dropout, training, rng)
    H = gcn_layer_forward(adj, H, W0)
    H = dc.dropout(H, dropout, training, rng)
    logits = gcn_layer_forward(adj, H, W1, activation="identity")
    loss = None if mask is None else dc.softmax_cross_entropy(logits, labels, mask)
    return loss, logits


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(config: ModelConfig, params: ModelParams, path) -> Path:
    from .graphstore import _atomic_write_text
    doc = {
        "format_version": FORMAT_VERSION,
        "config": config.to_json(),
        "layers": [[w.tolist() for w in layer.W] + [s.tolist() for s in layer.ntn]
                   for layer in params.layers],
        "classifier": params.classifier.tolist(),
    }
    _atomic_write_text(Path(path), json.dumps(doc) + "\n")
    return Path(path)


def load_checkpoint(path) -> tuple[ModelConfig, ModelParams]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    config = ModelConfig.from_json(doc["config"])
    n_w = config.num_hops + 1
    layers = []
    for mats in doc["layers"]:
        arrs = [np.array(m, dtype=np.float64) for m in mats]
        if len(arrs) != 2 * n_w - 1:
            raise ValueError("checkpoint layer has the wrong number of matrices")
        layers.append(LayerParams(arrs[:n_w], arrs[n_w:]))
    return config, ModelParams(layers, np.array(doc["classifier"], dtype=np.float64))
