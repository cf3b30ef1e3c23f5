"""Dense float64 tensors with reverse-mode autodiff over a fixed op catalog.

Every operation records its parents and a backward closure; calling
``backward()`` on a scalar walks the tape in reverse construction order.
There is no implicit broadcasting: each op accepts exactly the shape
combinations it documents and raises ShapeError otherwise, so shape bugs
surface at the call site.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from operator import attrgetter
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class EvaluationError(RuntimeError):
    """A graph evaluation produced a non-finite result."""


_next_tid = 0
_grad_enabled = True


def _take_tid() -> int:
    global _next_tid
    _next_tid += 1
    return _next_tid


@contextmanager
def no_grad():
    """Build ops without backward closures (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Immutable-by-convention dense array node in the autodiff graph.

    ``data`` is always a C-contiguous float64 ndarray of rank 1..4. Leaf
    tensors may have ``requires_grad=True``; non-leaf tensors carry the op
    name, parent references and a backward closure. Gradients accumulate
    into ``grad`` (same shape as ``data``) during ``backward``.
    """

    __slots__ = ("data", "parents", "op", "requires_grad", "grad", "_backward", "_tid")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not 1 <= arr.ndim <= 4:
            raise ShapeError(f"tensor rank must be 1..4, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise EvaluationError("tensor initialised with non-finite entries")
        self.data = arr
        self.parents: tuple[Tensor, ...] = ()
        self.op = "leaf"
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._backward: Callable[[], None] | None = None
        self._tid = _take_tid()

    @classmethod
    def _node(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str,
              backward: Callable[[], None] | None) -> "Tensor":
        global _next_tid
        t = cls.__new__(cls)
        t.data = data
        t.parents = parents
        t.op = op
        rg = False
        if _grad_enabled:
            for p in parents:
                if p.requires_grad:
                    rg = True
                    break
        t.requires_grad = rg
        t.grad = None
        t._backward = backward if rg else None
        _next_tid += 1
        t._tid = _next_tid
        return t

    @classmethod
    def constant(cls, data: np.ndarray) -> "Tensor":
        """Wrap a trusted float64 array as a non-learnable leaf, no checks."""
        global _next_tid
        t = cls.__new__(cls)
        t.data = data
        t.parents = ()
        t.op = "leaf"
        t.requires_grad = False
        t.grad = None
        t._backward = None
        _next_tid += 1
        t._tid = _next_tid
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-entry tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def _accumulate(self, g: np.ndarray) -> None:
        """Add a gradient that may alias another node's buffer (copied)."""
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def _accumulate_owned(self, g: np.ndarray) -> None:
        """Add a freshly computed gradient array (taken by reference)."""
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, sinks: dict["Tensor", np.ndarray] | None = None) -> None:
        """Compute gradients of this scalar with respect to the reachable graph.

        Gradients of every reachable node are reset first, so each call
        yields the gradient of exactly this loss. With ``sinks`` given,
        gradients of requires-grad *leaf* tensors are added into
        ``sinks[leaf]`` (and cleared from the leaf) instead of being left
        on ``leaf.grad``; that is how per-sample gradients are combined
        across a batch.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _topo_order(self)
        for t in order:
            if t is not self:
                t.grad = None
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward()
        if sinks is not None:
            for t in order:
                if t.op == "leaf" and t.requires_grad and t.grad is not None:
                    if t in sinks:
                        sinks[t] += t.grad
                    else:
                        sinks[t] = t.grad.copy()
                    t.grad = None

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def _topo_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering of the subgraph reachable from root.

    Construction ids increase monotonically and every parent is built before
    its children, so sorting the reachable set by id is a topological order.
    """
    order = [root]
    seen = {root._tid}
    stack = [root]
    while stack:
        node = stack.pop()
        for p in node.parents:
            if p.requires_grad and p._tid not in seen:
                seen.add(p._tid)
                order.append(p)
                stack.append(p)
    order.sort(key=attrgetter("_tid"))
    return order


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


# ---------------------------------------------------------------------------
# op catalog
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m x k) and b (k x n)."""
    _require(a.data.ndim == 2 and b.data.ndim == 2,
             f"matmul needs two matrices, got shapes {a.shape} and {b.shape}")
    _require(a.shape[1] == b.shape[0],
             f"matmul inner dims differ: {a.shape} vs {b.shape}")
    out_data = a.data @ b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate_owned(g @ b.data.T)
        if b.requires_grad:
            b._accumulate_owned(a.data.T @ g)

    out = Tensor._node(out_data, (a, b), "matmul", backward)
    return out


def matvec(a: Tensor, x: Tensor) -> Tensor:
    """Matrix-vector product of a (m x k) and x (k,) -> (m,)."""
    _require(a.data.ndim == 2 and x.data.ndim == 1,
             f"matvec needs matrix and vector, got {a.shape} and {x.shape}")
    _require(a.shape[1] == x.shape[0],
             f"matvec inner dims differ: {a.shape} vs {x.shape}")
    out_data = a.data @ x.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate_owned(g[:, None] * x.data[None, :])
        if x.requires_grad:
            x._accumulate_owned(a.data.T @ g)

    out = Tensor._node(out_data, (a, x), "matvec", backward)
    return out


def dot(x: Tensor, y: Tensor) -> Tensor:
    """Inner product of two equal-length vectors, as a shape-(1,) scalar."""
    _require(x.data.ndim == 1 and y.data.ndim == 1 and x.shape == y.shape,
             f"dot needs equal-length vectors, got {x.shape} and {y.shape}")
    out_data = np.array([x.data @ y.data])

    def backward():
        g = out.grad[0]
        if x.requires_grad:
            x._accumulate_owned(g * y.data)
        if y.requires_grad:
            y._accumulate_owned(g * x.data)

    out = Tensor._node(out_data, (x, y), "dot", backward)
    return out


def linear2(w1: Tensor, x1: Tensor, w2: Tensor, x2: Tensor, b: Tensor) -> Tensor:
    """Fused w1 @ x1 + w2 @ x2 + b for vectors; one node per gate of a cell."""
    _require(w1.data.ndim == 2 and w2.data.ndim == 2
             and x1.data.ndim == 1 and x2.data.ndim == 1 and b.data.ndim == 1,
             "linear2 needs (matrix, vector, matrix, vector, vector)")
    _require(w1.shape[1] == x1.shape[0], f"linear2: {w1.shape} vs {x1.shape}")
    _require(w2.shape[1] == x2.shape[0], f"linear2: {w2.shape} vs {x2.shape}")
    _require(w1.shape[0] == w2.shape[0] == b.shape[0],
             f"linear2 output dims differ: {w1.shape}, {w2.shape}, {b.shape}")
    out_data = w1.data @ x1.data + w2.data @ x2.data + b.data

    def backward():
        g = out.grad
        if w1.requires_grad:
            w1._accumulate_owned(g[:, None] * x1.data[None, :])
        if x1.requires_grad:
            x1._accumulate_owned(w1.data.T @ g)
        if w2.requires_grad:
            w2._accumulate_owned(g[:, None] * x2.data[None, :])
        if x2.requires_grad:
            x2._accumulate_owned(w2.data.T @ g)
        if b.requires_grad:
            b._accumulate_owned(g)

    out = Tensor._node(out_data, (w1, x1, w2, x2, b), "linear2", backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"add shapes differ: {a.shape} vs {b.shape}")
    out_data = a.data + b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate_owned(g)
        if b.requires_grad:
            b._accumulate(g)

    out = Tensor._node(out_data, (a, b), "add", backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"sub shapes differ: {a.shape} vs {b.shape}")
    out_data = a.data - b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate_owned(g)
        if b.requires_grad:
            b._accumulate_owned(-g)

    out = Tensor._node(out_data, (a, b), "sub", backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equal-shape tensors."""
    _require(a.shape == b.shape, f"mul shapes differ: {a.shape} vs {b.shape}")
    out_data = a.data * b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate_owned(g * b.data)
        if b.requires_grad:
            b._accumulate_owned(g * a.data)

    out = Tensor._node(out_data, (a, b), "mul", backward)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out_data = a.data * s

    def backward():
        if a.requires_grad:
            a._accumulate_owned(out.grad * s)

    out = Tensor._node(out_data, (a,), "scale", backward)
    return out


def add_scalar(a: Tensor, c: float) -> Tensor:
    out_data = a.data + float(c)

    def backward():
        if a.requires_grad:
            a._accumulate_owned(out.grad)

    out = Tensor._node(out_data, (a,), "add_scalar", backward)
    return out


def add_col(a: Tensor, v: Tensor) -> Tensor:
    """Add vector v (m,) to every column of matrix a (m x n)."""
    _require(a.data.ndim == 2 and v.data.ndim == 1 and a.shape[0] == v.shape[0],
             f"add_col needs (m x n, m), got {a.shape} and {v.shape}")
    out_data = a.data + v.data[:, None]

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate_owned(g)
        if v.requires_grad:
            v._accumulate_owned(g.sum(axis=1))

    out = Tensor._node(out_data, (a, v), "add_col", backward)
    return out


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward():
        if a.requires_grad:
            a._accumulate_owned(out.grad * (a.data > 0.0))

    out = Tensor._node(out_data, (a,), "relu", backward)
    return out


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    out_data = _stable_sigmoid(a.data)

    def backward():
        if a.requires_grad:
            a._accumulate_owned(out.grad * out_data * (1.0 - out_data))

    out = Tensor._node(out_data, (a,), "sigmoid", backward)
    return out


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward():
        if a.requires_grad:
            a._accumulate_owned(out.grad * (1.0 - out_data * out_data))

    out = Tensor._node(out_data, (a,), "tanh", backward)
    return out


def log(a: Tensor) -> Tensor:
    """Natural log; caller must keep entries positive (clip first)."""
    if not np.all(a.data > 0.0):
        raise EvaluationError("log needs strictly positive finite entries")
    out_data = np.log(a.data)

    def backward():
        if a.requires_grad:
            a._accumulate_owned(out.grad / a.data)

    out = Tensor._node(out_data, (a,), "log", backward)
    return out


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp entries to [lo, hi]; gradient passes only where unclamped."""
    out_data = np.clip(a.data, lo, hi)

    def backward():
        if a.requires_grad:
            mask = (a.data > lo) & (a.data < hi)
            a._accumulate_owned(out.grad * mask)

    out = Tensor._node(out_data, (a,), "clip", backward)
    return out


def softmax_rows(a: Tensor, scale: float = 1.0) -> Tensor:
    """Row-wise softmax of a (m x n) after dividing by ``scale``.

    Rows are shifted by their max before exponentiation, so any finite
    input yields rows that sum to 1 with strictly positive entries.
    """
    if scale <= 0.0:
        raise ValueError(f"softmax scale must be positive, got {scale}")
    _require(a.data.ndim == 2, f"softmax_rows needs a matrix, got {a.shape}")
    z = a.data / scale
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=1, keepdims=True)

    def backward():
        if a.requires_grad:
            g = out.grad
            inner = (g * out_data).sum(axis=1, keepdims=True)
            a._accumulate_owned((out_data * (g - inner)) / scale)

    out = Tensor._node(out_data, (a,), "softmax_rows", backward)
    return out


def transpose(a: Tensor) -> Tensor:
    _require(a.data.ndim == 2, f"transpose needs a matrix, got {a.shape}")
    out_data = a.data.T

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad.T)   # view: copy keeps grads contiguous

    out = Tensor._node(out_data, (a,), "transpose", backward)
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack matrices vertically: (m1 x n), (m2 x n), ... -> ((m1+m2+..) x n)."""
    parts = list(parts)
    _require(len(parts) >= 1, "concat_rows needs at least one matrix")
    n = parts[0].shape
    _require(all(p.data.ndim == 2 for p in parts),
             f"concat_rows needs matrices, got {[p.shape for p in parts]}")
    _require(all(p.shape[1] == n[1] for p in parts),
             f"concat_rows column counts differ: {[p.shape for p in parts]}")
    out_data = np.concatenate([p.data for p in parts], axis=0)

    def backward():
        g = out.grad
        r = 0
        for p in parts:
            if p.requires_grad:
                p._accumulate(g[r:r + p.shape[0], :])
            r += p.shape[0]

    out = Tensor._node(out_data, tuple(parts), "concat_rows", backward)
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Stack matrices horizontally: (m x n1), (m x n2), ... -> (m x (n1+n2+..))."""
    parts = list(parts)
    _require(len(parts) >= 1, "concat_cols needs at least one matrix")
    m = parts[0].shape[0]
    _require(all(p.data.ndim == 2 for p in parts),
             f"concat_cols needs matrices, got {[p.shape for p in parts]}")
    _require(all(p.shape[0] == m for p in parts),
             f"concat_cols row counts differ: {[p.shape for p in parts]}")
    out_data = np.concatenate([p.data for p in parts], axis=1)

    def backward():
        g = out.grad
        c = 0
        for p in parts:
            if p.requires_grad:
                p._accumulate(g[:, c:c + p.shape[1]])
            c += p.shape[1]

    out = Tensor._node(out_data, tuple(parts), "concat_cols", backward)
    return out


def concat_vecs(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate vectors end to end."""
    parts = list(parts)
    _require(len(parts) >= 1, "concat_vecs needs at least one vector")
    _require(all(p.data.ndim == 1 for p in parts),
             f"concat_vecs needs vectors, got {[p.shape for p in parts]}")
    out_data = np.concatenate([p.data for p in parts])

    def backward():
        g = out.grad
        i = 0
        for p in parts:
            if p.requires_grad:
                p._accumulate(g[i:i + p.shape[0]])
            i += p.shape[0]

    out = Tensor._node(out_data, tuple(parts), "concat_vecs", backward)
    return out


def slice_vec(a: Tensor, start: int, stop: int) -> Tensor:
    """Entries [start, stop) of a vector."""
    _require(a.data.ndim == 1, f"slice_vec needs a vector, got {a.shape}")
    _require(0 <= start < stop <= a.shape[0],
             f"slice_vec range [{start}:{stop}) outside {a.shape}")
    out_data = a.data[start:stop].copy()

    def backward():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[start:stop] = out.grad
            a._accumulate_owned(g)

    out = Tensor._node(out_data, (a,), "slice_vec", backward)
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Rows [start, stop) of a matrix."""
    _require(a.data.ndim == 2, f"slice_rows needs a matrix, got {a.shape}")
    _require(0 <= start < stop <= a.shape[0],
             f"slice_rows range [{start}:{stop}) outside {a.shape}")
    out_data = np.ascontiguousarray(a.data[start:stop, :])

    def backward():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[start:stop, :] = out.grad
            a._accumulate_owned(g)

    out = Tensor._node(out_data, (a,), "slice_rows", backward)
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    _require(int(np.prod(shape)) == a.data.size,
             f"reshape {a.shape} -> {shape} changes element count")
    _require(1 <= len(shape) <= 4, f"reshape target rank must be 1..4, got {shape}")
    out_data = a.data.reshape(shape)

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad.reshape(a.data.shape))

    out = Tensor._node(out_data, (a,), "reshape", backward)
    return out


def mean(a: Tensor) -> Tensor:
    """Mean over all entries, as a shape-(1,) scalar."""
    n = a.data.size
    out_data = np.array([a.data.sum() / n])

    def backward():
        if a.requires_grad:
            a._accumulate_owned(np.full_like(a.data, out.grad[0] / n))

    out = Tensor._node(out_data, (a,), "mean", backward)
    return out


def sum_all(a: Tensor) -> Tensor:
    """Sum over all entries, as a shape-(1,) scalar."""
    out_data = np.array([a.data.sum()])

    def backward():
        if a.requires_grad:
            a._accumulate_owned(np.full_like(a.data, out.grad[0]))

    out = Tensor._node(out_data, (a,), "sum_all", backward)
    return out


L2_EPS = 1e-12


def l2_normalize_cols(a: Tensor) -> Tensor:
    """Divide each column of a (m x n) by max(column l2 norm, 1e-12)."""
    _require(a.data.ndim == 2, f"l2_normalize_cols needs a matrix, got {a.shape}")
    norms = np.sqrt((a.data * a.data).sum(axis=0))
    denom = np.maximum(norms, L2_EPS)
    out_data = a.data / denom[None, :]

    def backward():
        if a.requires_grad:
            g = out.grad
            live = norms > L2_EPS
            inner = (g * out_data).sum(axis=0)
            grad = g / denom[None, :]
            grad[:, live] -= out_data[:, live] * (inner[live] / denom[live])[None, :]
            a._accumulate_owned(grad)

    out = Tensor._node(out_data, (a,), "l2_normalize_cols", backward)
    return out


def maxpool2d(a: Tensor, window: int) -> Tensor:
    """Non-overlapping spatial max pool of a (C x H x W) map.

    H and W must be divisible by ``window``; gradient routes to the first
    maximal entry of each block (numpy argmax tie-break), deterministically.
    """
    _require(a.data.ndim == 3, f"maxpool2d needs a C x H x W tensor, got {a.shape}")
    c, h, w = a.shape
    _require(window >= 1 and h % window == 0 and w % window == 0,
             f"maxpool2d window {window} does not divide spatial dims of {a.shape}")
    ho, wo = h // window, w // window
    blocks = a.data.reshape(c, ho, window, wo, window)
    blocks = blocks.transpose(0, 1, 3, 2, 4).reshape(c, ho, wo, window * window)
    idx = blocks.argmax(axis=3)
    out_data = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]

    def backward():
        if a.requires_grad:
            g = np.zeros((c, ho, wo, window * window))
            np.put_along_axis(g, idx[..., None], out.grad[..., None], axis=3)
            g = g.reshape(c, ho, wo, window, window).transpose(0, 1, 3, 2, 4)
            a._accumulate_owned(np.ascontiguousarray(g.reshape(c, h, w)))

    out = Tensor._node(out_data, (a,), "maxpool2d", backward)
    return out


# ---------------------------------------------------------------------------
# finite-difference gradient oracle
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Outcome of comparing backward gradients against central differences.

    ``max_rel_error`` uses |analytic - numeric| / max(1, |analytic|, |numeric|)
    per entry, so nearly-zero gradients are compared absolutely and O(1)
    gradients relatively.
    """

    max_rel_error: float
    tol: float
    step: float
    per_param: list[tuple[str, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor],
               step: float = 1e-5, tol: float = 1e-4,
               names: Sequence[str] | None = None) -> GradCheckReport:
    """Check backward gradients of scalar ``f()`` against central differences.

    ``f`` must rebuild its graph from the given leaf ``params`` on every
    call; each parameter entry is perturbed in place by +/-``step``.
    """
    if not 1e-6 <= step <= 1e-4:
        raise ValueError(f"grad_check step must be in [1e-6, 1e-4], got {step}")
    params = list(params)
    if names is None:
        names = [f"param{i}" for i in range(len(params))]

    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise EvaluationError("grad_check: function value is not finite")
    for p in params:
        p.zero_grad()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    worst = 0.0
    per_param = []
    for p, a_grad, name in zip(params, analytic, names):
        flat = p.data.reshape(-1)
        a_flat = a_grad.reshape(-1)
        p_worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = f().item()
            flat[i] = orig - step
            f_minus = f().item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise EvaluationError("grad_check: perturbed value is not finite")
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i]), abs(numeric))
            if err > p_worst:
                p_worst = err
        per_param.append((name, p_worst))
        worst = max(worst, p_worst)
    return GradCheckReport(max_rel_error=worst, tol=tol, step=step, per_param=per_param)


# ---------------------------------------------------------------------------
# DCNT on-disk tensor format
# ---------------------------------------------------------------------------

DCNT_MAGIC = b"DCNT"


def save_tensor(path, t: Tensor | np.ndarray) -> None:
    """Write a tensor as DCNT: magic, u32 rank, u32 dims, f64 row-major data."""
    arr = t.data if isinstance(t, Tensor) else np.ascontiguousarray(t, dtype=np.float64)
    if not 1 <= arr.ndim <= 4:
        raise ShapeError(f"DCNT stores rank 1..4, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(DCNT_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f8").tobytes(order="C"))


def load_tensor(path) -> np.ndarray:
    """Read a DCNT file back into a float64 ndarray."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DCNT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {DCNT_MAGIC!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        if not 1 <= rank <= 4:
            raise ValueError(f"{path}: rank {rank} outside 1..4")
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        count = int(np.prod(dims))
        payload = fh.read(8 * count)
        if len(payload) != 8 * count:
            raise ValueError(f"{path}: truncated payload")
        return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
