"""Graph container, on-disk format, synthetic generators and splits.

A graph directory holds four files::

    graph.json     sizes and type names
    features.csv   N lines of D comma-separated reals
    edges.tsv      src<TAB>dst<TAB>edge_type, 0-based, directed
    labels.csv     node_id,label for labeled nodes only

``splits.json`` may sit next to them.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GraphFormatError(ValueError):
    """Raised for malformed or inconsistent graph data."""


@dataclass
class Graph:
    num_nodes: int
    node_type: np.ndarray  # (N,) int
    edges: np.ndarray  # (E, 3) int: src, dst, edge_type
    features: np.ndarray  # (N, D) float64
    labels: dict[int, int]
    num_classes: int
    edge_type_names: list[str] = field(default_factory=lambda: ["edge"])
    node_type_names: list[str] = field(default_factory=lambda: ["node"])

    def __post_init__(self):
        self.node_type = np.asarray(self.node_type, dtype=np.int64).reshape(-1)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = {int(k): int(v) for k, v in self.labels.items()}
        self.validate()

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edge_types(self) -> int:
        return len(self.edge_type_names)

    @property
    def num_node_types(self) -> int:
        return len(self.node_type_names)

    @property
    def is_homogeneous(self) -> bool:
        return self.num_node_types == 1 and self.num_edge_types == 1

    def validate(self):
        n = self.num_nodes
        if n <= 0:
            raise GraphFormatError("graph must have at least one node")
        if self.node_type.shape != (n,):
            raise GraphFormatError(
                f"node_types has {self.node_type.shape[0]} entries, expected {n}")
        if self.node_type.size and (self.node_type.min() < 0
                                    or self.node_type.max() >= self.num_node_types):
            raise GraphFormatError("node type id out of range")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphFormatError(
                f"features have shape {self.features.shape}, expected ({n}, D)")
        if not np.all(np.isfinite(self.features)):
            raise GraphFormatError("features contain non-finite values")
        if len(self.edges):
            src, dst, et = self.edges.T
            if min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n:
                raise GraphFormatError("edge endpoint id out of range")
            if et.min() < 0 or et.max() >= self.num_edge_types:
                raise GraphFormatError("edge type id out of range")
            if len(np.unique(self.edges, axis=0)) != len(self.edges):
                raise GraphFormatError("duplicate (src, dst, edge_type) triple")
        if self.num_classes <= 0:
            raise GraphFormatError("num_classes must be positive")
        for node, label in self.labels.items():
            if not 0 <= node < n:
                raise GraphFormatError(f"labeled node id {node} out of range")
            if not 0 <= label < self.num_classes:
                raise GraphFormatError(f"label {label} of node {node} out of range")

    def edges_of_type(self, edge_type: int) -> np.ndarray:
        return self.edges[self.edges[:, 2] == edge_type, :2]

    def edge_type_id(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        try:
            return self.edge_type_names.index(name)
        except ValueError:
            raise GraphFormatError(f"unknown edge type {name!r}") from None

    def label_array(self) -> np.ndarray:
        """Labels as an (N,) array with -1 for unlabeled nodes."""
        out = np.full(self.num_nodes, -1, dtype=np.int64)
        for node, label in self.labels.items():
            out[node] = label
        return out

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes
                and self.num_classes == other.num_classes
                and self.edge_type_names == other.edge_type_names
                and self.node_type_names == other.node_type_names
                and np.array_equal(self.node_type, other.node_type)
                and np.array_equal(_sorted_edges(self.edges), _sorted_edges(other.edges))
                and np.array_equal(self.features, other.features)
                and self.labels == other.labels)


def _sorted_edges(edges):
    return edges[np.lexsort((edges[:, 2], edges[:, 1], edges[:, 0]))]


@dataclass
class SplitSet:
    train: list[int]
    val: list[int]
    test: list[int]

    def validate(self, graph: Graph | None = None):
        parts = {"train": self.train, "val": self.val, "test": self.test}
        for name, ids in parts.items():
            if not ids:
                raise GraphFormatError(f"{name} split is empty")
        sets = [set(ids) for ids in parts.values()]
        if sum(map(len, sets)) != len(set().union(*sets)):
            raise GraphFormatError("splits overlap or contain duplicates")
        if graph is not None:
            missing = set().union(*sets) - set(graph.labels)
            if missing:
                raise GraphFormatError(
                    f"split contains unlabeled node {min(missing)}")

    def to_json(self) -> dict:
        return {"train": list(map(int, self.train)),
                "val": list(map(int, self.val)),
                "test": list(map(int, self.test))}


# ---------------------------------------------------------------------------
# Disk format

def _atomic_write_text(path: Path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_graph(graph: Graph, dir_path) -> Path:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "num_nodes": graph.num_nodes,
        "feature_dim": graph.feature_dim,
        "num_classes": graph.num_classes,
        "node_types": graph.node_type.tolist(),
        "edge_type_names": list(graph.edge_type_names),
        "node_type_names": list(graph.node_type_names),
    }
    # repr() of a float round-trips exactly
    feats = "".join(",".join(repr(float(v)) for v in row) + "\n"
                    for row in graph.features)
    edges = "".join(f"{s}\t{t}\t{e}\n" for s, t, e in graph.edges.tolist())
    labels = "".join(f"{n},{c}\n" for n, c in sorted(graph.labels.items()))
    _atomic_write_text(d / "features.csv", feats)
    _atomic_write_text(d / "edges.tsv", edges)
    _atomic_write_text(d / "labels.csv", labels)
    _atomic_write_text(d / "graph.json", json.dumps(meta) + "\n")
    return d


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise GraphFormatError(f"missing file: {path}")
    return [ln for ln in path.read_text().splitlines() if ln.strip()]


def load_graph(dir_path) -> Graph:
    """Read a graph directory; raises GraphFormatError on any inconsistency."""
    d = Path(dir_path)
    for name in ("graph.json", "features.csv", "edges.tsv", "labels.csv"):
        if not (d / name).is_file():
            raise GraphFormatError(f"missing file: {d / name}")
    try:
        meta = json.loads((d / "graph.json").read_text())
        n = int(meta["num_nodes"])
        dim = int(meta["feature_dim"])
        num_classes = int(meta["num_classes"])
    except (KeyError, ValueError, TypeError) as exc:
        raise GraphFormatError(f"bad graph.json: {exc}") from None
    node_types = meta.get("node_types", [0] * n)
    edge_names = meta.get("edge_type_names") or ["edge"]
    node_names = meta.get("node_type_names") or ["node"]

    rows = _read_lines(d / "features.csv")
    if len(rows) != n:
        raise GraphFormatError(
            f"features.csv has {len(rows)} rows but graph.json says {n} nodes")
    try:
        features = np.array([[float(v) for v in r.split(",")] for r in rows],
                            dtype=np.float64).reshape(n, -1)
    except ValueError:
        raise GraphFormatError("features.csv rows have inconsistent widths") from None
    if features.shape[1] != dim:
        raise GraphFormatError(
            f"features.csv has {features.shape[1]} columns but feature_dim is {dim}")

    edges = []
    for ln in _read_lines(d / "edges.tsv"):
        parts = ln.split("\t")
        if len(parts) != 3:
            raise GraphFormatError(f"bad edges.tsv line: {ln!r}")
        edges.append([int(p) for p in parts])

    labels = {}
    for ln in _read_lines(d / "labels.csv"):
        node, label = (int(p) for p in ln.split(","))
        if node in labels:
            raise GraphFormatError(f"node {node} labeled twice")
        labels[node] = label

    return Graph(num_nodes=n, node_type=node_types,
                 edges=np.array(edges, dtype=np.int64).reshape(-1, 3),
                 features=features, labels=labels, num_classes=num_classes,
                 edge_type_names=list(edge_names), node_type_names=list(node_names))


def save_splits(splits: SplitSet, path):
    _atomic_write_text(Path(path), json.dumps(splits.to_json()) + "\n")


def load_splits(path, graph: Graph | None = None) -> SplitSet:
    raw = json.loads(Path(path).read_text())
    splits = SplitSet(train=list(raw["train"]), val=list(raw["val"]),
                      test=list(raw["test"]))
    splits.validate(graph)
    return splits


# ---------------------------------------------------------------------------
# Synthetic generators

@dataclass
class GenParamsHomogeneous:
    nodes_per_class: int = 100
    num_classes: int = 3
    p_in: float = 0.10
    p_out: float = 0.01
    feature_dim: int = 16
    signal: float = 0.5
    seed: int = 0


@dataclass
class GenParamsHeterogeneous:
    """Author/paper/conference schema; only authors are labeled.

    Each paper carries a latent class. An author links to a paper of its own
    class with probability ``p_ap_in`` and to any other paper with
    ``p_ap_out``. Each (paper, conference) pair is linked with ``p_pc``.
    Authors and papers get ``class_mean * signal`` plus unit noise as
    features (authors scaled by ``author_signal_scale``); conferences get
    zero rows.
    """
    authors_per_class: int = 50
    num_classes: int = 3
    num_papers: int = 120
    num_conferences: int = 6
    p_ap_in: float = 0.10
    p_ap_out: float = 0.01
    p_pc: float = 1 / 6
    feature_dim: int = 16
    signal: float = 0.5
    author_signal_scale: float = 0.5
    seed: int = 0


def _class_means(rng, num_classes, dim):
    return rng.standard_normal((num_classes, dim))


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def generate_homogeneous(params: GenParamsHomogeneous) -> Graph:
    """Planted-partition graph with Gaussian class-mean features."""
    if params.nodes_per_class <= 0 or params.num_classes <= 0:
        raise ValueError("need at least one class and one node per class")
    _check_prob("p_in", params.p_in)
    _check_prob("p_out", params.p_out)
    if not params.p_in > params.p_out:
        raise ValueError("p_in must exceed p_out")
    if params.signal < 0:
        raise ValueError("signal must be non-negative")

    rng = np.random.default_rng(params.seed)
    n = params.nodes_per_class * params.num_classes
    y = np.repeat(np.arange(params.num_classes), params.nodes_per_class)
    prob = np.where(y[:, None] == y[None, :], params.p_in, params.p_out)
    draw = rng.random((n, n))
    upper = np.triu(draw < prob, k=1)
    src, dst = np.nonzero(upper)
    edges = np.concatenate([np.stack([src, dst], 1), np.stack([dst, src], 1)])
    edges = np.column_stack([edges, np.zeros(len(edges), dtype=np.int64)])
    edges = _sorted_edges(edges)

    means = _class_means(rng, params.num_classes, params.feature_dim)
    x = means[y] * params.signal + rng.standard_normal((n, params.feature_dim))
    return Graph(num_nodes=n, node_type=np.zeros(n, dtype=np.int64), edges=edges,
                 features=x, labels=dict(enumerate(y.tolist())),
                 num_classes=params.num_classes)


# edge type "XY" holds edges that feed Y-nodes into X-nodes (src in Y,
# dst in X), so the typed adjacency of "XY" has X rows and Y columns and a
# meta-path such as A-P-C is the product of "AP" and "PC".
HETERO_EDGE_TYPES = ["AP", "PA", "PC", "CP"]
HETERO_NODE_TYPES = ["A", "P", "C"]


def generate_heterogeneous(params: GenParamsHeterogeneous) -> Graph:
    """Tri-type author/paper/conference graph with class-correlated A-P links."""
    if params.authors_per_class <= 0 or params.num_classes <= 0:
        raise ValueError("need at least one class and one author per class")
    if params.num_papers <= 0 or params.num_conferences <= 0:
        raise ValueError("need at least one paper and one conference")
    for name in ("p_ap_in", "p_ap_out", "p_pc"):
        _check_prob(name, getattr(params, name))
    if params.signal < 0:
        raise ValueError("signal must be non-negative")

    rng = np.random.default_rng(params.seed)
    k = params.num_classes
    na = params.authors_per_class * k
    npap, nc = params.num_papers, params.num_conferences
    a_ids = np.arange(na)
    p_ids = na + np.arange(npap)
    c_ids = na + npap + np.arange(nc)
    n = na + npap + nc

    a_cls = np.repeat(np.arange(k), params.authors_per_class)
    p_cls = np.arange(npap) % k

    ap_prob = np.where(a_cls[:, None] == p_cls[None, :], params.p_ap_in, params.p_ap_out)
    ai, pj = np.nonzero(rng.random((na, npap)) < ap_prob)
    pk, cl = np.nonzero(rng.random((npap, nc)) < params.p_pc)

    a_nodes, p_nodes = a_ids[ai], p_ids[pj]
    p2, c_nodes = p_ids[pk], c_ids[cl]
    blocks = [
        (p_nodes, a_nodes, 0),  # AP: paper -> author
        (a_nodes, p_nodes, 1),  # PA: author -> paper
        (c_nodes, p2, 2),       # PC: conference -> paper
        (p2, c_nodes, 3),       # CP: paper -> conference
    ]
    edges = np.concatenate([
        np.column_stack([s, d, np.full(len(s), t)]) for s, d, t in blocks
    ]).astype(np.int64).reshape(-1, 3)
    edges = _sorted_edges(edges)

    d = params.feature_dim
    means = _class_means(rng, k, d)
    x = np.zeros((n, d))
    x[a_ids] = (means[a_cls] * params.signal * params.author_signal_scale
                + rng.standard_normal((na, d)))
    x[p_ids] = means[p_cls] * params.signal + rng.standard_normal((npap, d))

    node_type = np.concatenate([np.zeros(na), np.ones(npap), np.full(nc, 2)])
    return Graph(num_nodes=n, node_type=node_type, edges=edges, features=x,
                 labels=dict(zip(a_ids.tolist(), a_cls.tolist())), num_classes=k,
                 edge_type_names=list(HETERO_EDGE_TYPES),
                 node_type_names=list(HETERO_NODE_TYPES))


# ---------------------------------------------------------------------------
# Splits

def make_splits(graph: Graph, train_per_class: int = 20, val_count: int = 500,
                seed: int = 0) -> SplitSet:
    """Class-balanced train set, random val set, every other labeled node in test."""
    if train_per_class <= 0 or val_count <= 0:
        raise ValueError("train_per_class and val_count must be positive")
    rng = np.random.default_rng(seed)
    nodes = np.array(sorted(graph.labels), dtype=np.int64)
    labels = np.array([graph.labels[i] for i in nodes.tolist()])
    train = []
    for c in range(graph.num_classes):
        pool = nodes[labels == c]
        if len(pool) < train_per_class:
            raise ValueError(
                f"class {c} has {len(pool)} labeled nodes, need {train_per_class}")
        train.extend(rng.permutation(pool)[:train_per_class].tolist())
    rest = np.setdiff1d(nodes, train)
    if len(rest) <= val_count:
        raise ValueError(
            f"{len(rest)} labeled nodes left after training, need more than "
            f"{val_count} for validation plus a test set")
    rest = rng.permutation(rest)
    val = sorted(rest[:val_count].tolist())
    test = sorted(rest[val_count:].tolist())
    splits = SplitSet(train=sorted(train), val=val, test=test)
    splits.validate(graph)
    return splits
