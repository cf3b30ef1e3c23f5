"""The dense co-attention layer and its stack.

Both modalities are augmented with learnable nowhere-to-attend columns,
projected per head to d/h dimensions, and scored against each other in a
shared affinity matrix. Row-stochastic maps (scaled softmax, averaged over
heads) attend each side on the other; the attended features are fused back
per column through a single ReLU layer with a residual connection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor, add, add_col, concat_cols, concat_rows, matmul, relu,
    slice_rows, transpose, ShapeError,
)

DIRECTION_BOTH = "both"
DIRECTION_QUESTION_GUIDED = "question_guided"   # only words->regions attention is learned
DIRECTION_IMAGE_GUIDED = "image_guided"         # only regions->words attention is learned


@dataclass
class CoAttnLayerParams:
    """All learnable tensors of one co-attention layer.

    ``w_v[i]`` and ``w_q[i]`` are the d/h x d head projections for the image
    and question sides; ``m_q``/``m_v`` are the d x K memory columns; the
    fusion nets are (d x 2d, d) weight/bias pairs, one per modality.
    """

    w_v: list[Tensor]
    w_q: list[Tensor]
    m_q: Tensor | None      # None when K = 0
    m_v: Tensor | None
    w_fuse_q: Tensor
    b_fuse_q: Tensor
    w_fuse_v: Tensor
    b_fuse_v: Tensor

    @property
    def heads(self) -> int:
        return len(self.w_v)

    @property
    def d_head(self) -> int:
        return self.w_v[0].shape[0]

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, t in enumerate(self.w_v):
            out.append((f"w_v{i}", t))
        for i, t in enumerate(self.w_q):
            out.append((f"w_q{i}", t))
        if self.m_q is not None:
            out.append(("m_q", self.m_q))
        if self.m_v is not None:
            out.append(("m_v", self.m_v))
        out += [("w_fuse_q", self.w_fuse_q), ("b_fuse_q", self.b_fuse_q),
                ("w_fuse_v", self.w_fuse_v), ("b_fuse_v", self.b_fuse_v)]
        return out


@dataclass
class AttentionMaps:
    """Head-averaged row-stochastic maps.

    ``a_q`` is (T+K) x (N+K): row t is region t's distribution over words
    and memory. ``a_v`` is (N+K) x (T+K): row n is word n's distribution
    over regions and memory.
    """

    a_q: Tensor
    a_v: Tensor


def augment_with_memory(x: Tensor, mem: Tensor | None) -> Tensor:
    """Append the memory columns: d x M plus d x K -> d x (M+K)."""
    if mem is None:
        return x
    if x.shape[0] != mem.shape[0]:
        raise ShapeError(f"memory rows {mem.shape} do not match features {x.shape}")
    return concat_cols([x, mem])


def head_affinity(v_aug: Tensor, q_aug: Tensor, w_v: Tensor, w_q: Tensor) -> Tensor:
    """Affinity of one head: (w_v @ v_aug)^T (w_q @ q_aug), (T+K) x (N+K).

    Fused into one graph node; the projected features are kept for the
    backward pass.
    """
    if w_v.shape[1] != v_aug.shape[0] or w_q.shape[1] != q_aug.shape[0]:
        raise ShapeError(f"head projections {w_v.shape}/{w_q.shape} do not match "
                         f"features {v_aug.shape}/{q_aug.shape}")
    if w_v.shape[0] != w_q.shape[0]:
        raise ShapeError(f"head widths differ: {w_v.shape} vs {w_q.shape}")
    proj_v = w_v.data @ v_aug.data
    proj_q = w_q.data @ q_aug.data
    out_data = proj_v.T @ proj_q

    def backward():
        g = out.grad
        d_proj_v = proj_q @ g.T
        d_proj_q = proj_v @ g
        if w_v.requires_grad:
            w_v._accumulate_owned(d_proj_v @ v_aug.data.T)
        if v_aug.requires_grad:
            v_aug._accumulate_owned(w_v.data.T @ d_proj_v)
        if w_q.requires_grad:
            w_q._accumulate_owned(d_proj_q @ q_aug.data.T)
        if q_aug.requires_grad:
            q_aug._accumulate_owned(w_q.data.T @ d_proj_q)

    out = Tensor._node(out_data, (v_aug, q_aug, w_v, w_q), "head_affinity", backward)
    return out


def _mean_scaled_softmax(affinities: list[Tensor], scale_by: float,
                         transposed: bool) -> Tensor:
    """Mean over heads of softmax(affinity / scale) rows, one fused node.

    With ``transposed`` the softmax normalizes each affinity's columns
    (rows of its transpose).
    """
    h = len(affinities)
    softmaxes = []
    acc = None
    for a in affinities:
        z = (a.data.T if transposed else a.data) / scale_by
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=1, keepdims=True)
        softmaxes.append(s)
        acc = s.copy() if acc is None else acc + s
    out_data = acc / h if h > 1 else acc

    def backward():
        g = out.grad / h
        for a, s in zip(affinities, softmaxes):
            if a.requires_grad:
                inner = (g * s).sum(axis=1, keepdims=True)
                da = (s * (g - inner)) / scale_by
                if transposed:
                    a._accumulate(da.T)
                else:
                    a._accumulate_owned(da)

    out = Tensor._node(out_data, tuple(affinities), "mean_scaled_softmax", backward)
    return out


def attention_maps(head_affinities: list[Tensor], d_head: int) -> AttentionMaps:
    """Average per-head scaled softmaxes into the two attention maps.

    Each head's affinity is divided by sqrt(d_head) and normalized row-wise
    (for a_q) and column-wise via its transpose (for a_v); the h maps are
    averaged, which keeps every row on the simplex.
    """
    if not head_affinities:
        raise ValueError("attention_maps needs at least one head")
    shape = head_affinities[0].shape
    for a in head_affinities:
        if a.shape != shape:
            raise ShapeError(f"head shapes differ: {[a.shape for a in head_affinities]}")
    root = math.sqrt(d_head)
    a_q = _mean_scaled_softmax(head_affinities, root, transposed=False)
    a_v = _mean_scaled_softmax(head_affinities, root, transposed=True)
    return AttentionMaps(a_q=a_q, a_v=a_v)


_UNIFORM_CACHE: dict[tuple[int, int], Tensor] = {}


def uniform_map(rows: int, cols: int) -> Tensor:
    """Constant row-stochastic map used for the disabled attention direction."""
    key = (rows, cols)
    cached = _UNIFORM_CACHE.get(key)
    if cached is None:
        cached = Tensor.constant(np.full((rows, cols), 1.0 / cols))
        _UNIFORM_CACHE[key] = cached
    return cached


def attend_question(q_aug: Tensor, a_q: Tensor, t: int) -> Tensor:
    """Attended question per region: q_aug (d x (N+K)) times the transposed
    first t rows of a_q, giving d x t. Memory rows of the map are dropped."""
    if a_q.shape[1] != q_aug.shape[1]:
        raise ShapeError(f"map width {a_q.shape} does not match features {q_aug.shape}")
    if t > a_q.shape[0]:
        raise ShapeError(f"cannot keep {t} rows of a {a_q.shape} map")
    kept = slice_rows(a_q, 0, t) if t < a_q.shape[0] else a_q
    return matmul(q_aug, transpose(kept))


def attend_image(v_aug: Tensor, a_v: Tensor, n: int) -> Tensor:
    """Attended image per word: v_aug (d x (T+K)) times the transposed
    first n rows of a_v, giving d x n."""
    if a_v.shape[1] != v_aug.shape[1]:
        raise ShapeError(f"map width {a_v.shape} does not match features {v_aug.shape}")
    if n > a_v.shape[0]:
        raise ShapeError(f"cannot keep {n} rows of a {a_v.shape} map")
    kept = slice_rows(a_v, 0, n) if n < a_v.shape[0] else a_v
    return matmul(v_aug, transpose(kept))


def fuse(side_input: Tensor, attended: Tensor, w: Tensor, b: Tensor,
         dropout_fn=None) -> Tensor:
    """Per-column relu(w @ [x; a] + b) + x with shared weights across columns."""
    if side_input.shape != attended.shape:
        raise ShapeError(
            f"fuse inputs differ: {side_input.shape} vs {attended.shape}")
    stacked = concat_rows([side_input, attended])
    out = relu(add_col(matmul(w, stacked), b))
    if dropout_fn is not None:
        out = dropout_fn(out)
    return add(out, side_input)


def dense_coattn_layer(q: Tensor, v: Tensor, p: CoAttnLayerParams,
                       mode: str = DIRECTION_BOTH,
                       dropout_fn=None) -> tuple[Tensor, Tensor, AttentionMaps]:
    """One co-attention update of (q: d x N, v: d x T).

    In single-direction modes the disabled side's map is replaced by the
    uniform map (mean pooling) before attending, which preserves the
    parameter set and both fusion networks.
    """
    n = q.shape[1]
    t = v.shape[1]
    q_aug = augment_with_memory(q, p.m_q)
    v_aug = augment_with_memory(v, p.m_v)
    affinities = [head_affinity(v_aug, q_aug, p.w_v[i], p.w_q[i])
                  for i in range(p.heads)]
    maps = attention_maps(affinities, p.d_head)
    a_q, a_v = maps.a_q, maps.a_v
    if mode == DIRECTION_QUESTION_GUIDED:
        a_q = uniform_map(*a_q.shape)
    elif mode == DIRECTION_IMAGE_GUIDED:
        a_v = uniform_map(*a_v.shape)
    elif mode != DIRECTION_BOTH:
        raise ValueError(f"unknown direction mode {mode!r}")
    q_hat = attend_question(q_aug, a_q, t)
    v_hat = attend_image(v_aug, a_v, n)
    q_next = fuse(q, v_hat, p.w_fuse_q, p.b_fuse_q, dropout_fn)
    v_next = fuse(v, q_hat, p.w_fuse_v, p.b_fuse_v, dropout_fn)
    return q_next, v_next, AttentionMaps(a_q=a_q, a_v=a_v)


@dataclass
class StackTrace:
    """Intermediate results of one stack pass, for export and inspection."""

    q_states: list[Tensor]
    v_states: list[Tensor]
    maps: list[AttentionMaps]


def dcn_stack(q: Tensor, v: Tensor, layer_params: list[CoAttnLayerParams],
              mode: str = DIRECTION_BOTH,
              dropout_fn=None) -> tuple[Tensor, Tensor, StackTrace]:
    """Apply the co-attention layers in sequence; layers own their parameters."""
    if len(layer_params) < 1:
        raise ValueError("dcn_stack needs at least one layer")
    trace = StackTrace(q_states=[q], v_states=[v], maps=[])
    for p in layer_params:
        q, v, m = dense_coattn_layer(q, v, p, mode, dropout_fn)
        trace.q_states.append(q)
        trace.v_states.append(v)
        trace.maps.append(m)
    return q, v, trace
