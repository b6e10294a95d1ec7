"""Tape-based reverse-mode differentiation over dense float64 matrices.

Every primitive appends one node to the tape holding its forward value and
whatever it needs for the adjoint. ``backward`` walks the tape once in
decreasing node order. Adjoint rules live in ``ADJOINTS`` keyed by op name.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .sparsela import CsrMatrix, spmm_dense


class Node:
    __slots__ = ("tape", "id", "op", "inputs", "value", "grad", "ctx", "name")

    def __init__(self, tape, id, op, inputs, value, ctx=None, name=None):
        self.tape = tape
        self.id = id
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad = None
        self.ctx = ctx
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node {self.id} {self.op}{label} {self.value.shape}>"


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.backward_visits = 0

    def _push(self, op, inputs, value, ctx=None, name=None) -> Node:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ValueError(f"{op}: values must be 2-D matrices, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"{op}: non-finite value produced")
        for x in inputs:
            if x.tape is not self:
                raise ValueError(f"{op}: input node belongs to another tape")
        node = Node(self, len(self.nodes), op, tuple(inputs), value, ctx, name)
        self.nodes.append(node)
        return node

    def variable(self, value, name: str | None = None) -> Node:
        """A leaf that receives a gradient."""
        return self._push("variable", (), np.array(value, dtype=np.float64, ndmin=2), name=name)

    def constant(self, value, name: str | None = None) -> Node:
        return self._push("constant", (), np.array(value, dtype=np.float64, ndmin=2), name=name)

    def variables(self) -> list[Node]:
        return [n for n in self.nodes if n.op == "variable"]

    def release(self):
        """Drop recorded nodes so they are freed without the cyclic collector."""
        for node in self.nodes:
            node.tape = None
            node.inputs = ()
            node.ctx = None
        self.nodes = []


def _shape_error(op, *shapes):
    return ValueError(f"{op}: incompatible shapes " + " and ".join(map(str, shapes)))


# ---------------------------------------------------------------------------
# Primitives

def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    return a.tape._push("matmul", (a, b), a.value @ b.value)


def spmm(s: CsrMatrix, x: Node) -> Node:
    """Constant sparse matrix times node; ``s`` gets no gradient."""
    if s.cols != x.shape[0]:
        raise _shape_error("spmm", s.shape, x.shape)
    return x.tape._push("spmm", (x,), spmm_dense(s, x.value), ctx=s)


def activation(x: Node, kind: str = "relu") -> Node:
    if kind == "relu":
        y = np.maximum(x.value, 0.0)
    elif kind == "sigmoid":
        y = _sigmoid(x.value)
    elif kind == "identity":
        y = x.value.copy()
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return x.tape._push(kind, (x,), y)


def relu(x: Node) -> Node:
    return activation(x, "relu")


def sigmoid(x: Node) -> Node:
    return activation(x, "sigmoid")


_SIG_LO = np.finfo(np.float64).tiny
_SIG_HI = np.nextafter(1.0, 0.0)


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep the open interval: |z| > ~37 would otherwise round to exactly 0 or 1
    return np.clip(out, _SIG_LO, _SIG_HI, out=out)


def dropout(x: Node, rate: float, training: bool, rng: np.random.Generator | None = None) -> Node:
    """Inverted dropout; identity when not training or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x.tape._push("dropout", (x,), x.value.copy(), ctx=None)
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x.tape._push("dropout", (x,), x.value * mask, ctx=mask)


def concat_cols(parts: Sequence[Node]) -> Node:
    if not parts:
        raise ValueError("concat_cols needs at least one part")
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise _shape_error("concat_cols", *(p.shape for p in parts))
    widths = [p.shape[1] for p in parts]
    return parts[0].tape._push("concat_cols", tuple(parts),
                               np.concatenate([p.value for p in parts], axis=1), ctx=widths)


def row_scale(x: Node, s: Node) -> Node:
    """Y[i, :] = s[i] * X[i, :] for a column vector ``s``."""
    if s.shape != (x.shape[0], 1):
        raise _shape_error("row_scale", x.shape, s.shape)
    return x.tape._push("row_scale", (x, s), x.value * s.value)


def batched_bilinear(h0: Node, hr: Node, w: Node) -> Node:
    """out[i] = h0[i] @ W @ hr[i]^T, one bilinear form per row."""
    n, d = h0.shape
    if hr.shape != (n, d) or w.shape != (d, d):
        raise _shape_error("batched_bilinear", h0.shape, hr.shape, w.shape)
    out = np.einsum("ij,ij->i", h0.value @ w.value, hr.value)[:, None]
    return h0.tape._push("bilinear", (h0, hr, w), out)


def softmax_cross_entropy(logits: Node, labels, mask) -> Node:
    """Summed (not averaged) cross-entropy over the rows listed in ``mask``."""
    mask = np.asarray(mask, dtype=np.int64).reshape(-1)
    if mask.size == 0:
        raise ValueError("softmax_cross_entropy: empty mask")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, f = logits.shape
    if mask.min() < 0 or mask.max() >= n:
        raise ValueError("softmax_cross_entropy: mask id out of range")
    y = labels[mask] if labels.shape[0] == n else labels
    if y.shape[0] != mask.shape[0]:
        raise ValueError("softmax_cross_entropy: labels do not match mask")
    if y.min() < 0 or y.max() >= f:
        raise ValueError("softmax_cross_entropy: label out of range")
    z = logits.value[mask]
    z = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    log_p = z - logsumexp[:, None]
    loss = -log_p[np.arange(len(mask)), y].sum()
    return logits.tape._push("softmax_xent", (logits,), [[loss]],
                             ctx=(mask, y, np.exp(log_p)))


# ---------------------------------------------------------------------------
# Adjoints: each takes (node, upstream grad) and returns one grad per input.

def _matmul_adjoint(node, g):
    a, b = node.inputs
    return g @ b.value.T, a.value.T @ g


def _spmm_adjoint(node, g):
    return (spmm_dense(node.ctx.transpose(), g),)


def _relu_adjoint(node, g):
    return (g * (node.inputs[0].value > 0),)


def _sigmoid_adjoint(node, g):
    y = node.value
    return (g * y * (1.0 - y),)


def _identity_adjoint(node, g):
    return (g,)


def _dropout_adjoint(node, g):
    return (g if node.ctx is None else g * node.ctx,)


def _concat_adjoint(node, g):
    bounds = np.cumsum([0] + node.ctx)
    return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))


def _row_scale_adjoint(node, g):
    x, s = node.inputs
    return g * s.value, np.einsum("ij,ij->i", x.value, g)[:, None]


def _bilinear_adjoint(node, g):
    h0, hr, w = node.inputs
    dh0 = g * (hr.value @ w.value.T)
    dhr = g * (h0.value @ w.value)
    dw = (h0.value * g).T @ hr.value
    return dh0, dhr, dw


def _softmax_xent_adjoint(node, g):
    mask, y, probs = node.ctx
    logits = node.inputs[0]
    d = probs.copy()
    d[np.arange(len(mask)), y] -= 1.0
    out = np.zeros_like(logits.value)
    np.add.at(out, mask, d * g[0, 0])
    return (out,)


ADJOINTS: dict[str, Callable] = {
    "matmul": _matmul_adjoint,
    "spmm": _spmm_adjoint,
    "relu": _relu_adjoint,
    "sigmoid": _sigmoid_adjoint,
    "identity": _identity_adjoint,
    "dropout": _dropout_adjoint,
    "concat_cols": _concat_adjoint,
    "row_scale": _row_scale_adjoint,
    "bilinear": _bilinear_adjoint,
    "softmax_xent": _softmax_xent_adjoint,
}


def backward(loss: Node) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(node) into ``node.grad`` for every node.

    Returns the gradients of all named variables (zeros where unused).
    Variables used more than once receive the sum of their adjoints.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a 1x1 loss, got {loss.shape}")
    tape = loss.tape
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(tape.nodes[:loss.id + 1]):
        tape.backward_visits += 1
        if node.grad is None or not node.inputs:
            continue
        grads = ADJOINTS[node.op](node, node.grad)
        for inp, gi in zip(node.inputs, grads):
            if inp.grad is None:
                inp.grad = np.array(gi, dtype=np.float64)
            else:
                inp.grad = inp.grad + gi
    out = {}
    for node in tape.variables():
        g = node.grad if node.grad is not None else np.zeros_like(node.value)
        if node.name is not None:
            out[node.name] = g
    return out


# ---------------------------------------------------------------------------
# Finite differences

def numerical_gradient(f: Callable[[Mapping[str, np.ndarray]], float],
                       params: Mapping[str, np.ndarray], step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of ``f`` with respect to every parameter entry."""
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    out = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(work)
            flat[i] = orig - step
            down = f(work)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        out[name] = g
    return out


def relative_error(analytic, numeric) -> float:
    a, n = np.asarray(analytic), np.asarray(numeric)
    if a.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom))


def finite_diff_check(f: Callable[[Mapping[str, np.ndarray]], float],
                      params: Mapping[str, np.ndarray],
                      grads: Mapping[str, np.ndarray], step: float = 1e-5) -> float:
    """Worst relative error |g - g_fd| / max(1, |g|, |g_fd|) over all entries.

    ``f`` must be deterministic (no dropout). Relu inputs sitting exactly on
    the kink are not handled; callers nudge such inputs away from 0.
    """
    numeric = numerical_gradient(f, params, step)
    return max((relative_error(grads[k], numeric[k]) for k in params), default=0.0)
