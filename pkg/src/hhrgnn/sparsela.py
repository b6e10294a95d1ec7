"""CSR sparse matrices and compilation of hop / meta-path relations.

All arithmetic is vectorised numpy over the CSR arrays. Reductions within a
row always run in ascending column order, so results do not depend on how
the input triplets were ordered.
"""

from __future__ import annotations

import logging
from functools import cached_property
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graphstore import Graph

log = logging.getLogger(__name__)

NORMALIZATIONS = ("none", "row", "symmetric")


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rp = np.asarray(self.row_ptr, dtype=np.int64)
        ci = np.asarray(self.col_idx, dtype=np.int64)
        va = np.asarray(self.values, dtype=np.float64)
        for a in (rp, ci, va):
            a.setflags(write=False)
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "values", va)
        if rp.shape != (self.rows + 1,) or rp[0] != 0:
            raise ValueError("row_ptr must have rows+1 entries starting at 0")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if rp[-1] != len(ci) or len(ci) != len(va):
            raise ValueError("row_ptr[-1], col_idx and values disagree on nnz")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.cols):
            raise ValueError("column index out of range")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.rows), np.diff(self.row_ptr))

    @classmethod
    def from_coo(cls, rows, cols, r, c, v=None) -> "CsrMatrix":
        """Build a canonical matrix, summing duplicates and dropping zeros."""
        r = np.asarray(r, dtype=np.int64).reshape(-1)
        c = np.asarray(c, dtype=np.int64).reshape(-1)
        v = np.ones(len(r)) if v is None else np.asarray(v, dtype=np.float64).reshape(-1)
        if not (len(r) == len(c) == len(v)):
            raise ValueError("coordinate arrays differ in length")
        if len(r) and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise ValueError("coordinate out of range")
        return _canonical(rows, cols, r, c, v)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "CsrMatrix":
        return cls(rows, cols, np.zeros(rows + 1, dtype=np.int64),
                   np.zeros(0, dtype=np.int64), np.zeros(0))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.col_idx] = self.values
        return out

    def transpose(self) -> "CsrMatrix":
        return self.T

    @cached_property
    def T(self) -> "CsrMatrix":
        return _canonical(self.cols, self.rows, self.col_idx, self.row_ids(), self.values)

    @cached_property
    def _scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def row_sums(self) -> np.ndarray:
        return _segment_sum(self.values, self.row_ptr)

    def with_values(self, values) -> "CsrMatrix":
        """Same pattern, new values (zeros are dropped)."""
        return _canonical(self.rows, self.cols, self.row_ids(), self.col_idx,
                          np.asarray(values, dtype=np.float64))

    def binarize(self) -> "CsrMatrix":
        return CsrMatrix(self.rows, self.cols, self.row_ptr, self.col_idx,
                         np.ones(self.nnz))

    def drop_diagonal(self) -> "CsrMatrix":
        keep = self.row_ids() != self.col_idx
        return _canonical(self.rows, self.cols, self.row_ids()[keep],
                          self.col_idx[keep], self.values[keep])

    def __add__(self, other: "CsrMatrix") -> "CsrMatrix":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return _canonical(self.rows, self.cols,
                          np.concatenate([self.row_ids(), other.row_ids()]),
                          np.concatenate([self.col_idx, other.col_idx]),
                          np.concatenate([self.values, other.values]))

    def __matmul__(self, other):
        if isinstance(other, CsrMatrix):
            return spmm_sparse(self, other)
        return spmm_dense(self, other)

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


def _segment_sum(values: np.ndarray, row_ptr: np.ndarray) -> np.ndarray:
    """Sum ``values`` over CSR row segments; empty rows give zeros."""
    out = np.zeros((len(row_ptr) - 1,) + values.shape[1:])
    nonempty = np.diff(row_ptr) > 0
    if values.shape[0]:
        out[nonempty] = np.add.reduceat(values, row_ptr[:-1][nonempty], axis=0)
    return out


def _canonical(rows, cols, r, c, v) -> CsrMatrix:
    r = np.asarray(r, dtype=np.int64)
    c = np.asarray(c, dtype=np.int64)
    v = np.asarray(v, dtype=np.float64)
    order = np.lexsort((c, r))
    r, c, v = r[order], c[order], v[order]
    if len(r):
        key = r * cols + c
        starts = np.flatnonzero(np.concatenate([[True], key[1:] != key[:-1]]))
        v = np.add.reduceat(v, starts)
        r, c = r[starts], c[starts]
        keep = v != 0
        r, c, v = r[keep], c[keep], v[keep]
    row_ptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=rows), out=row_ptr[1:])
    return CsrMatrix(rows, cols, row_ptr, c, v)


# ---------------------------------------------------------------------------
# Operations

def build_typed_adjacency(graph: Graph, edge_type) -> CsrMatrix:
    """0/1 adjacency of one edge type; row i holds i's in-neighbours.

    An edge (j -> i) sets A[i, j] = 1. Parallel edges collapse.
    """
    et = graph.edge_type_id(edge_type)
    if not 0 <= et < graph.num_edge_types:
        raise ValueError(f"edge type {edge_type} out of range")
    e = graph.edges_of_type(et)
    n = graph.num_nodes
    return CsrMatrix.from_coo(n, n, e[:, 1], e[:, 0]).binarize()


def normalize(m: CsrMatrix, mode: str = "row") -> CsrMatrix:
    """Row (D^-1 M) or symmetric (D^-1/2 M D^-1/2) normalisation by row sums."""
    if mode == "none":
        return m
    if mode not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {mode!r}")
    deg = m.row_sums()
    if mode == "row":
        safe = np.where(deg != 0, deg, 1.0)
        return m.with_values(m.values / safe[m.row_ids()])
    if m.rows != m.cols:
        raise ValueError("symmetric normalization needs a square matrix")
    if np.any(m.values < 0):
        raise ValueError("symmetric normalization needs non-negative entries")
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    return m.with_values(m.values * inv_sqrt[m.row_ids()] * inv_sqrt[m.col_idx])


def spmm_sparse(a: CsrMatrix, b: CsrMatrix) -> CsrMatrix:
    """Sparse-sparse product by expanding every a[i,k]*b[k,:] contribution."""
    if a.cols != b.rows:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    b_len = np.diff(b.row_ptr)
    counts = b_len[a.col_idx]
    total = int(counts.sum())
    if total == 0:
        return CsrMatrix.zeros(a.rows, b.cols)
    a_rows = a.row_ids()
    owner = np.repeat(np.arange(a.nnz), counts)
    # position of each expanded entry inside its b row
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    b_pos = b.row_ptr[a.col_idx[owner]] + offsets
    return _canonical(a.rows, b.cols, a_rows[owner], b.col_idx[b_pos],
                      a.values[owner] * b.values[b_pos])


def spmm_dense(s: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse times dense; each output row is summed in stored column order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or s.cols != x.shape[0]:
        raise ValueError(f"dimension mismatch: {s.shape} @ {x.shape}")
    return np.asarray(s._scipy @ x)


# ---------------------------------------------------------------------------
# Relations

@dataclass(frozen=True)
class RelationSpec:
    """A hop power ``A^hops`` or a sum of meta-path products.

    ``paths`` entries may be edge-type ids or names; names resolve against
    the graph at compile time.
    """
    name: str
    hops: int | None = None
    paths: tuple[tuple, ...] | None = None
    normalization: str = "row"
    binarize: bool | None = None

    def __post_init__(self):
        if (self.hops is None) == (self.paths is None):
            raise ValueError(f"relation {self.name!r}: give exactly one of hops or paths")
        if self.hops is not None and self.hops < 0:
            raise ValueError("hop count must be >= 0")
        if self.paths is not None:
            paths = tuple(tuple(p) for p in self.paths)
            if not paths or any(len(p) == 0 for p in paths):
                raise ValueError(f"relation {self.name!r} needs non-empty paths")
            object.__setattr__(self, "paths", paths)
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.binarize is None:
            object.__setattr__(self, "binarize", self.paths is not None)

    @property
    def kind(self) -> str:
        return "power" if self.hops is not None else "metapath"

    @property
    def is_identity(self) -> bool:
        return self.hops == 0

    @classmethod
    def power(cls, hops: int, name: str | None = None, **kw) -> "RelationSpec":
        return cls(name=name or ("self" if hops == 0 else f"hop{hops}"), hops=hops, **kw)

    @classmethod
    def metapath(cls, *paths, name: str | None = None, **kw) -> "RelationSpec":
        """``metapath("AP", "PC")`` is a single path A-P-C; pass lists for a sum."""
        if paths and all(isinstance(p, (str, int)) for p in paths):
            paths = (tuple(paths),)
        return cls(name=name or "+".join("".join(map(str, p)) for p in paths),
                   paths=tuple(tuple(p) for p in paths), **kw)

    def to_json(self) -> dict:
        out = {"name": self.name, "normalization": self.normalization,
               "binarize": self.binarize}
        if self.hops is not None:
            out["hops"] = self.hops
        else:
            out["paths"] = [list(p) for p in self.paths]
        return out

    @classmethod
    def from_json(cls, d: dict) -> "RelationSpec":
        unknown = set(d) - {"name", "hops", "paths", "normalization", "binarize"}
        if unknown:
            raise ValueError(f"unknown relation keys: {sorted(unknown)}")
        paths = d.get("paths")
        return cls(name=d["name"], hops=d.get("hops"),
                   paths=None if paths is None else tuple(tuple(p) for p in paths),
                   normalization=d.get("normalization", "row"),
                   binarize=d.get("binarize"))


@dataclass(frozen=True)
class CompiledRelation:
    spec: RelationSpec
    matrix: CsrMatrix
    diagnostics: tuple[str, ...] = field(default=())

    @property
    def name(self) -> str:
        return self.spec.name


def base_adjacency(graph: Graph) -> CsrMatrix:
    """Symmetrised 0/1 adjacency over all edge types, self-loops removed."""
    n = graph.num_nodes
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    a = CsrMatrix.from_coo(n, n, np.concatenate([dst, src]), np.concatenate([src, dst]))
    return a.binarize().drop_diagonal()


def matrix_power(a: CsrMatrix, r: int) -> CsrMatrix:
    out = CsrMatrix.identity(a.rows)
    for _ in range(r):
        out = spmm_sparse(out, a)
    return out


def relation_matrix(graph: Graph, spec: RelationSpec) -> tuple[CsrMatrix, list[str]]:
    """Unnormalised, un-binarised relation matrix plus diagnostics."""
    n = graph.num_nodes
    notes = []
    if spec.hops is not None:
        if spec.hops == 0:
            return CsrMatrix.identity(n), notes
        return matrix_power(base_adjacency(graph), spec.hops), notes
    total = CsrMatrix.zeros(n, n)
    for path in spec.paths:
        ids = [graph.edge_type_id(t) for t in path]
        for t in ids:
            if not 0 <= t < graph.num_edge_types:
                raise ValueError(f"relation {spec.name!r}: edge type {t} out of range")
        mats = [build_typed_adjacency(graph, t).drop_diagonal() for t in ids]
        prod = mats[0]
        for m in mats[1:]:
            prod = spmm_sparse(prod, m)
        if prod.nnz == 0:
            notes.append(f"relation {spec.name!r}: path {list(path)} has an empty product")
        total = total + prod
    return total, notes


def compile_relation(graph: Graph, spec: RelationSpec) -> CompiledRelation:
    m, notes = relation_matrix(graph, spec)
    for note in notes:
        log.warning(note)
    if spec.binarize:
        m = m.binarize()
    return CompiledRelation(spec, normalize(m, spec.normalization), tuple(notes))


def compile_relations(graph: Graph, specs: Sequence[RelationSpec]) -> list[CompiledRelation]:
    return [compile_relation(graph, s) for s in specs]


def gcn_adjacency(graph: Graph) -> CompiledRelation:
    """D^-1/2 (A + I) D^-1/2, the usual GCN propagation matrix."""
    a = base_adjacency(graph) + CsrMatrix.identity(graph.num_nodes)
    spec = RelationSpec(name="gcn", hops=1, normalization="symmetric")
    return CompiledRelation(spec, normalize(a, "symmetric"))


def dump_relation_tsv(rel: CompiledRelation | CsrMatrix, path) -> Path:
    """Write ``row<TAB>col<TAB>value`` triples, one stored entry per line."""
    m = rel.matrix if isinstance(rel, CompiledRelation) else rel
    lines = "".join(f"{i}\t{j}\t{v!r}\n" for i, j, v in
                    zip(m.row_ids().tolist(), m.col_idx.tolist(), m.values.tolist()))
    from .graphstore import _atomic_write_text
    _atomic_write_text(Path(path), lines)
    return Path(path)
