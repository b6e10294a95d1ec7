"""Full-batch Adam training with early stopping, metrics and gradient checks."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diffcore as dc
from .graphstore import (Graph, GenParamsHomogeneous, SplitSet, generate_homogeneous)
from .model import (ModelConfig, ModelParams, gcn_forward, init_gcn_params, init_params,
                    model_forward)
from .sparsela import RelationSpec, compile_relations, gcn_adjacency

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class OptimHyper:
    lr: float = 0.008
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    max_epochs: int = 500
    patience: int = 20

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    epoch: int = 0
    best_val_accuracy: float = -np.inf
    best_val_loss: float = np.inf
    best_params: dict[str, np.ndarray] | None = None
    best_epoch: int = -1
    epochs_since_improvement: int = 0

    @classmethod
    def fresh(cls, params: dict[str, np.ndarray]) -> "TrainState":
        params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        return cls(params=params,
                   m={k: np.zeros_like(v) for k, v in params.items()},
                   v={k: np.zeros_like(v) for k, v in params.items()})


def adam_step(state: TrainState, grads: dict[str, np.ndarray], hyper: OptimHyper) -> TrainState:
    """Decoupled weight decay, then one bias-corrected Adam update (in place)."""
    state.step += 1
    t = state.step
    c1 = 1.0 - hyper.beta1 ** t
    c2 = 1.0 - hyper.beta2 ** t
    for name, theta in state.params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {theta.shape}")
        if hyper.weight_decay:
            theta -= hyper.lr * hyper.weight_decay * theta
        m, v = state.m[name], state.v[name]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        theta -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return state


# ---------------------------------------------------------------------------
# Metrics

@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    loss: float
    precision: list[float] = field(default_factory=list)
    recall: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "loss": self.loss,
                "precision": self.precision, "recall": self.recall}


def classification_metrics(pred, truth, num_classes: int, loss: float = float("nan")) -> Metrics:
    """Accuracy and macro-F1 over all ``num_classes`` classes.

    A class with no true and no predicted members scores F1 = 0.
    """
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.size == 0:
        raise ValueError("cannot compute metrics on an empty set")
    precision, recall, f1 = [], [], []
    for c in range(num_classes):
        tp = float(np.sum((pred == c) & (truth == c)))
        n_pred = float(np.sum(pred == c))
        n_true = float(np.sum(truth == c))
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true if n_true else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    return Metrics(accuracy=float(np.mean(pred == truth)), macro_f1=float(np.mean(f1)),
                   loss=float(loss), precision=precision, recall=recall)


def _metrics_from_logits(logits, labels, mask, num_classes):
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("evaluation mask is empty")
    tape = dc.Tape()
    loss = dc.softmax_cross_entropy(tape.constant(logits), labels, mask).value[0, 0]
    return classification_metrics(logits[mask].argmax(axis=1), labels[mask], num_classes, loss)


def evaluate(params: ModelParams, graph: Graph, relations, mask) -> Metrics:
    """Eval-mode forward, argmax predictions on ``mask``."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("evaluation mask is empty")
    _, logits, _ = model_forward(dc.Tape(), params, relations, graph.features)
    return _metrics_from_logits(logits.value, graph.label_array(), mask, graph.num_classes)


# ---------------------------------------------------------------------------
# Training loop

class EarlyStopping:
    """Monitors validation accuracy; equal accuracy with lower loss also counts."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_accuracy = -np.inf
        self.best_loss = np.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, accuracy: float, loss: float) -> bool:
        improved = (accuracy > self.best_accuracy
                    or (accuracy == self.best_accuracy and loss < self.best_loss))
        if improved:
            self.best_accuracy, self.best_loss, self.best_epoch = accuracy, loss, epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return improved

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_macro_f1: float
    val_loss: float
    epoch_seconds: float


def fit(forward: Callable, params: dict[str, np.ndarray], labels: np.ndarray, splits: SplitSet,
        num_classes: int, hyper: OptimHyper, rng: np.random.Generator):
    """Generic full-batch loop.

    ``forward(params, mask, training, rng)`` must return (loss node, logits
    node) on a fresh tape. Returns (best params, history, state).
    """
    state = TrainState.fresh(params)
    stopper = EarlyStopping(hyper.patience)
    history: list[EpochRecord] = []
    train_mask = np.asarray(splits.train, dtype=np.int64)
    val_mask = np.asarray(splits.val, dtype=np.int64)
    for epoch in range(hyper.max_epochs):
        t0 = time.perf_counter()
        try:
            loss, _ = forward(state.params, train_mask, True, rng)
            grads = dc.backward(loss)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
        train_loss = float(loss.value[0, 0])
        loss.tape.release()
        adam_step(state, grads, hyper)
        _, logits = forward(state.params, None, False, None)
        logits.tape.release()
        val = _metrics_from_logits(logits.value, labels, val_mask, num_classes)
        seconds = time.perf_counter() - t0
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"epoch {epoch}: non-finite training loss")

        history.append(EpochRecord(epoch, train_loss, val.accuracy, val.macro_f1,
                                   val.loss, seconds))
        state.epoch = epoch
        if stopper.update(epoch, val.accuracy, val.loss):
            state.best_params = {k: v.copy() for k, v in state.params.items()}
            state.best_val_accuracy, state.best_val_loss = val.accuracy, val.loss
            state.best_epoch = epoch
        state.epochs_since_improvement = stopper.bad_epochs
        log.debug("epoch %d loss %.4f val acc %.4f", epoch, train_loss, val.accuracy)
        if stopper.should_stop:
            break
    return state.best_params, history, state


def train(graph: Graph, splits: SplitSet, config: ModelConfig, hyper: OptimHyper | None = None,
          relations=None):
    """Train HHR-GNN; returns (best ModelParams, history, compiled relations).

    Relations are compiled once here unless passed in precompiled.
    """
    hyper = hyper or OptimHyper()
    if relations is None:
        relations = compile_relations(graph, config.relations)
    splits.validate(graph)
    labels = graph.label_array()
    rng = np.random.default_rng([config.seed, 1])
    X = graph.features

    def forward(named, mask, training, rng):
        params = ModelParams.from_named(named)
        loss, logits, _ = model_forward(dc.Tape(), params, relations, X, labels, mask,
                                        training, config.dropout if training else 0.0, rng)
        return loss, logits

    init = init_params(config, graph.feature_dim).named()
    best, history, _ = fit(forward, init, labels, splits, graph.num_classes, hyper, rng)
    return ModelParams.from_named(best), history, relations


def train_gcn(graph: Graph, splits: SplitSet, hidden: int = 16, dropout: float = 0.5,
              hyper: OptimHyper | None = None, seed: int = 0):
    """Two-layer GCN baseline on the symmetric-normalised adjacency with self-loops."""
    hyper = hyper or OptimHyper(lr=0.01)
    adj = gcn_adjacency(graph)
    labels = graph.label_array()
    rng = np.random.default_rng([seed, 2])

    def forward(named, mask, training, rng):
        return gcn_forward(dc.Tape(), named, adj, graph.features, labels, mask, training,
                           dropout if training else 0.0, rng)

    init = init_gcn_params(graph.feature_dim, hidden, graph.num_classes, seed)
    best, history, _ = fit(forward, init, labels, splits, graph.num_classes, hyper, rng)

    def evaluate_gcn(mask):
        _, logits = forward(best, None, False, None)
        return _metrics_from_logits(logits.value, labels, mask, graph.num_classes)

    return best, history, evaluate_gcn


# ---------------------------------------------------------------------------
# Whole-model gradient check

def toy_graph(num_nodes: int = 30, num_classes: int = 3, feature_dim: int = 6,
              seed: int = 0) -> Graph:
    per_class = max(1, num_nodes // num_classes)
    return generate_homogeneous(GenParamsHomogeneous(
        nodes_per_class=per_class, num_classes=num_classes, p_in=0.3, p_out=0.05,
        feature_dim=feature_dim, signal=1.0, seed=seed))


def default_gradcheck_config(num_classes: int = 3, seed: int = 0) -> ModelConfig:
    return ModelConfig(relations=[RelationSpec.power(0), RelationSpec.power(1),
                                  RelationSpec.power(2)],
                       layer_dims=(8, 4), num_classes=num_classes, dropout=0.0, seed=seed)


def grad_check_model(config: ModelConfig | None = None, graph: Graph | None = None,
                     seed: int = 0, step: float = 1e-5) -> float:
    """Worst relative error between backward() and central differences.

    Checks every parameter entry of a freshly initialised model, dropout off.
    """
    graph = graph or toy_graph(seed=seed)
    config = config or default_gradcheck_config(graph.num_classes, seed)
    if graph.num_nodes > 30:
        raise ValueError("gradient check is limited to graphs of at most 30 nodes")
    relations = compile_relations(graph, config.relations)
    labels = graph.label_array()
    mask = np.array(sorted(graph.labels), dtype=np.int64)
    params = init_params(config, graph.feature_dim).named()

    def loss_of(named):
        loss, _, _ = model_forward(dc.Tape(), ModelParams.from_named(named), relations,
                                   graph.features, labels, mask)
        return float(loss.value[0, 0])

    loss, _, _ = model_forward(dc.Tape(), ModelParams.from_named(params), relations,
                               graph.features, labels, mask)
    grads = dc.backward(loss)
    return dc.finite_diff_check(loss_of, params, grads, step)
