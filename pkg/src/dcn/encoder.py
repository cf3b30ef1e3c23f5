"""Question/answer encoding and multi-scale image feature extraction.

Questions and answers run through a shared one-layer bidirectional LSTM
with a learned linear residual from the embedding. Image features arrive
as four feature maps of halving spatial size; each is max-pooled to the
region grid, projected to width d, depth-normalized, and the four levels
are blended with question-conditioned attention weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError
from .tensor import (
    Tensor, _stable_sigmoid, add, concat_cols, concat_vecs,
    l2_normalize_cols, matmul, matvec, maxpool2d, relu, reshape,
    slice_vec, softmax_rows, ShapeError,
)

GATES = ("i", "f", "o", "g")


@dataclass
class LstmDirection:
    """Gate weights of one LSTM direction: w_* (d/2 x e), u_* (d/2 x d/2), b_* (d/2)."""

    w_i: Tensor
    w_f: Tensor
    w_o: Tensor
    w_g: Tensor
    u_i: Tensor
    u_f: Tensor
    u_o: Tensor
    u_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for kind in ("w", "u", "b"):
            for gate in GATES:
                name = f"{kind}_{gate}"
                out.append((name, getattr(self, name)))
        return out


@dataclass
class LstmParams:
    """Bidirectional cell weights plus the residual embedding projection r (d x e)."""

    fwd: LstmDirection
    bwd: LstmDirection
    r: Tensor

    @property
    def half(self) -> int:
        return self.fwd.w_i.shape[0]

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = [(f"fwd.{n}", t) for n, t in self.fwd.tensors()]
        out += [(f"bwd.{n}", t) for n, t in self.bwd.tensors()]
        out.append(("r", self.r))
        return out


def _lstm_cell_node(x: Tensor, h_prev: Tensor, c_prev: Tensor,
                    dp: LstmDirection) -> Tensor:
    """Fused LSTM cell: one graph node whose value is [h_new; c_new]."""
    xd, hd, cd = x.data, h_prev.data, c_prev.data
    gate_i = _stable_sigmoid(dp.w_i.data @ xd + dp.u_i.data @ hd + dp.b_i.data)
    gate_f = _stable_sigmoid(dp.w_f.data @ xd + dp.u_f.data @ hd + dp.b_f.data)
    gate_o = _stable_sigmoid(dp.w_o.data @ xd + dp.u_o.data @ hd + dp.b_o.data)
    cand = np.tanh(dp.w_g.data @ xd + dp.u_g.data @ hd + dp.b_g.data)
    c_new = gate_f * cd + gate_i * cand
    tc = np.tanh(c_new)
    h_new = gate_o * tc
    half = hd.shape[0]
    parents = (x, h_prev, c_prev,
               dp.w_i, dp.w_f, dp.w_o, dp.w_g,
               dp.u_i, dp.u_f, dp.u_o, dp.u_g,
               dp.b_i, dp.b_f, dp.b_o, dp.b_g)

    def backward():
        g = out.grad
        dh = g[:half]
        dc = g[half:] + dh * gate_o * (1.0 - tc * tc)
        d_o = dh * tc
        d_f = dc * cd
        d_i = dc * cand
        d_g = dc * gate_i
        dz = (d_i * gate_i * (1.0 - gate_i),
              d_f * gate_f * (1.0 - gate_f),
              d_o * gate_o * (1.0 - gate_o),
              d_g * (1.0 - cand * cand))
        ws = (dp.w_i, dp.w_f, dp.w_o, dp.w_g)
        us = (dp.u_i, dp.u_f, dp.u_o, dp.u_g)
        bs = (dp.b_i, dp.b_f, dp.b_o, dp.b_g)
        dx = np.zeros_like(xd)
        dh_prev = np.zeros_like(hd)
        for dzk, w, u, b in zip(dz, ws, us, bs):
            if w.requires_grad:
                w._accumulate_owned(dzk[:, None] * xd[None, :])
            if u.requires_grad:
                u._accumulate_owned(dzk[:, None] * hd[None, :])
            if b.requires_grad:
                b._accumulate(dzk)
            dx += w.data.T @ dzk
            dh_prev += u.data.T @ dzk
        if x.requires_grad:
            x._accumulate_owned(dx)
        if h_prev.requires_grad:
            h_prev._accumulate_owned(dh_prev)
        if c_prev.requires_grad:
            c_prev._accumulate_owned(dc * gate_f)

    out = Tensor._node(np.concatenate([h_new, c_new]), parents, "lstm_cell", backward)
    return out


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              p: LstmParams, direction: str) -> tuple[Tensor, Tensor]:
    """One LSTM cell update; ``direction`` picks the 'fwd' or 'bwd' weights.

    i, f, o are logistic gates, g is the tanh candidate; the new cell state
    is f*c_prev + i*g and the hidden state o*tanh(c).
    """
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    dp = p.fwd if direction == "fwd" else p.bwd
    if x.shape[0] != dp.w_i.shape[1]:
        raise ShapeError(f"lstm_step input width {x.shape} vs gate weights {dp.w_i.shape}")
    if h_prev.shape != c_prev.shape or h_prev.shape[0] != dp.u_i.shape[1]:
        raise ShapeError(
            f"lstm_step state shapes {h_prev.shape}/{c_prev.shape} vs recurrent {dp.u_i.shape}")
    half = h_prev.shape[0]
    hc = _lstm_cell_node(x, h_prev, c_prev, dp)
    return slice_vec(hc, 0, half), slice_vec(hc, half, 2 * half)


def _run_bilstm(token_ids: list[int], emb: Tensor, p: LstmParams,
                col_cache: dict | None = None):
    """Both directional passes; returns per-step hiddens and the embeddings.

    ``col_cache`` may hold constant per-token embedding Tensors, reusable
    across graphs because the table is frozen.
    """
    n = len(token_ids)
    half = p.half
    if col_cache is None:
        cols = [Tensor.constant(emb.data[tid]) for tid in token_ids]
    else:
        cols = []
        for tid in token_ids:
            t = col_cache.get(tid)
            if t is None:
                t = Tensor.constant(emb.data[tid])
                col_cache[tid] = t
            cols.append(t)
    zero = Tensor.constant(np.zeros(half))
    h_fwd: list[Tensor] = []
    h, c = zero, zero
    for i in range(n):
        h, c = lstm_step(cols[i], h, c, p, "fwd")
        h_fwd.append(h)
    h_bwd: list[Tensor] = [zero] * n
    h, c = zero, zero
    for i in range(n - 1, -1, -1):
        h, c = lstm_step(cols[i], h, c, p, "bwd")
        h_bwd[i] = h
    return cols, h_fwd, h_bwd


def _check_tokens(token_ids, emb: Tensor, n_max: int) -> list[int]:
    token_ids = [int(t) for t in token_ids]
    if len(token_ids) == 0:
        raise ValueError("token sequence is empty")
    if len(token_ids) > n_max:
        raise ValueError(f"token sequence length {len(token_ids)} exceeds cap {n_max}")
    vocab = emb.shape[0]
    for t in token_ids:
        if not 0 <= t < vocab:
            raise ValueError(f"token id {t} outside vocabulary of size {vocab}")
    return token_ids


def encode_question(token_ids, emb: Tensor, p: LstmParams,
                    n_max: int = 14, col_cache: dict | None = None) -> tuple[Tensor, Tensor]:
    """Encode a question into (Q: d x N, s_q: d).

    Column n concatenates the two directional hidden states at step n plus
    the residual projection of the word embedding; s_q concatenates the
    final forward state with the final backward state (no residual).
    """
    token_ids = _check_tokens(token_ids, emb, n_max)
    cols, h_fwd, h_bwd = _run_bilstm(token_ids, emb, p, col_cache)
    q_cols = []
    for i in range(len(token_ids)):
        col = add(concat_vecs([h_fwd[i], h_bwd[i]]), matvec(p.r, cols[i]))
        q_cols.append(reshape(col, (col.shape[0], 1)))
    q = concat_cols(q_cols) if len(q_cols) > 1 else q_cols[0]
    s_q = concat_vecs([h_fwd[-1], h_bwd[0]])
    return q, s_q


def encode_answer(token_ids, emb: Tensor, p: LstmParams, n_max: int = 14,
                  col_cache: dict | None = None) -> Tensor:
    """Encode an answer phrase with the same weights, keeping only the summary."""
    token_ids = _check_tokens(token_ids, emb, n_max)
    _, h_fwd, h_bwd = _run_bilstm(token_ids, emb, p, col_cache)
    return concat_vecs([h_fwd[-1], h_bwd[0]])


def read_token_sequences(path) -> list[list[int]]:
    """Read newline-delimited whitespace-separated integer token id lists."""
    sequences = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sequences.append([int(tok) for tok in line.split()])
    return sequences


# ---------------------------------------------------------------------------
# image side
# ---------------------------------------------------------------------------

@dataclass
class LayerAttnParams:
    """Per-level projections p_j (d x c_j) and the level-score MLP of s_q."""

    projections: list[Tensor]
    mlp_w1: Tensor   # h_mlp x d
    mlp_b1: Tensor   # h_mlp
    mlp_w2: Tensor   # 4 x h_mlp
    mlp_b2: Tensor   # 4

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = [(f"p{j}", p) for j, p in enumerate(self.projections)]
        out += [("mlp_w1", self.mlp_w1), ("mlp_b1", self.mlp_b1),
                ("mlp_w2", self.mlp_w2), ("mlp_b2", self.mlp_b2)]
        return out


def pool_project(feature_map: Tensor, window: int, projection: Tensor) -> Tensor:
    """Max-pool a (c_j x h_j x h_j) map to the region grid, project each
    position to width d and depth-normalize: returns d x t with unit (or
    zero) columns."""
    c, h, w = feature_map.shape
    if h != w:
        raise ShapeError(f"pool_project needs a square map, got {feature_map.shape}")
    if window < 1 or h % window != 0:
        raise ConfigError(f"pooling window {window} does not divide spatial size {h}")
    pooled = maxpool2d(feature_map, window)
    side = h // window
    flat = reshape(pooled, (c, side * side))
    projected = matmul(projection, flat)
    return l2_normalize_cols(projected)


def layer_attention_fuse(s_q: Tensor, levels: list[Tensor],
                         p: LayerAttnParams,
                         dropout_fn=None) -> tuple[Tensor, Tensor]:
    """Blend equal-shape level matrices with weights from an MLP of s_q.

    Returns (v: d x t, alpha: 4-vector of positive weights summing to 1).
    ``dropout_fn``, when given, is applied to the MLP hidden activation.
    """
    if len(levels) != len(p.projections):
        raise ShapeError(f"expected {len(p.projections)} levels, got {len(levels)}")
    shape = levels[0].shape
    for lv in levels:
        if lv.shape != shape:
            raise ShapeError(f"level shapes differ: {[l.shape for l in levels]}")
    hidden = relu(add(matvec(p.mlp_w1, s_q), p.mlp_b1))
    if dropout_fn is not None:
        hidden = dropout_fn(hidden)
    scores = add(matvec(p.mlp_w2, hidden), p.mlp_b2)
    alpha_row = softmax_rows(reshape(scores, (1, scores.shape[0])))
    alpha = reshape(alpha_row, (scores.shape[0],))
    d, t = shape
    flat = concat_cols([reshape(lv, (d * t, 1)) for lv in levels])
    v = reshape(matvec(flat, alpha), (d, t))
    return v, alpha
