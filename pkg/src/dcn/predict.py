"""Self-attentive summaries, the three answer-scoring heads, and the loss.

The summaries collapse the final d x N and d x T matrices into single
vectors with softmax weights scored per column by small MLPs. Scores come
from one of three heads: a bilinear form against an encoded answer
(variant 16), an MLP over the summed summaries (17), or an MLP over their
concatenation (18). Training treats answers as independent binary labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor, add, add_col, add_scalar, clip, concat_vecs, dot, log, matmul,
    matvec, mean, mul, relu, reshape, scale, sigmoid, softmax_rows,
    transpose, ShapeError,
)


@dataclass
class ScoreMlp:
    """Two-layer MLP w2 @ relu(w1 @ x + b1) + b2 applied to vectors or columns."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]

    def apply_vec(self, x: Tensor, dropout_fn=None) -> Tensor:
        hidden = relu(add(matvec(self.w1, x), self.b1))
        if dropout_fn is not None:
            hidden = dropout_fn(hidden)
        return add(matvec(self.w2, hidden), self.b2)

    def apply_cols(self, x: Tensor, dropout_fn=None) -> Tensor:
        hidden = relu(add_col(matmul(self.w1, x), self.b1))
        if dropout_fn is not None:
            hidden = dropout_fn(hidden)
        return add_col(matmul(self.w2, hidden), self.b2)


@dataclass
class SummaryParams:
    """Independent per-column score MLPs (d -> H -> 1) for words and regions."""

    word_mlp: ScoreMlp
    region_mlp: ScoreMlp

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = [(f"word.{n}", t) for n, t in self.word_mlp.tensors()]
        out += [(f"region.{n}", t) for n, t in self.region_mlp.tensors()]
        return out


@dataclass
class HeadParams:
    """Scoring head: ``variant`` 16 carries a d x d bilinear matrix, 17/18 an MLP."""

    variant: int
    w: Tensor | None = None
    mlp: ScoreMlp | None = None

    def tensors(self) -> list[tuple[str, Tensor]]:
        if self.variant == 16:
            return [("w", self.w)]
        return [(f"mlp.{n}", t) for n, t in self.mlp.tensors()]


def self_attend_summary(x: Tensor, mlp: ScoreMlp, uniform: bool = False,
                        dropout_fn=None) -> tuple[Tensor, Tensor]:
    """Summarize columns of x (d x M) into (s: d, alpha: M).

    Per-column MLP scores go through a softmax to give alpha; s is the
    alpha-weighted column sum. With ``uniform`` the scores are replaced by
    zeros, which reduces the summary to the plain column average.
    """
    if x.data.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"self_attend_summary needs a d x M matrix with M >= 1, got {x.shape}")
    if uniform:
        scores = Tensor(np.zeros((1, x.shape[1])))
    else:
        scores = mlp.apply_cols(x, dropout_fn)
    alpha_row = softmax_rows(scores)
    s = reshape(matmul(x, transpose(alpha_row)), (x.shape[0],))
    return s, reshape(alpha_row, (x.shape[1],))


def score_inner(s_q: Tensor, s_v: Tensor, s_a: Tensor, w: Tensor) -> Tensor:
    """Bilinear answer score sigmoid(s_a^T w (s_q + s_v)) as a shape-(1,) scalar."""
    if w.shape != (s_a.shape[0], s_q.shape[0]):
        raise ShapeError(f"bilinear matrix {w.shape} does not match vectors "
                         f"{s_a.shape} and {s_q.shape}")
    return sigmoid(dot(s_a, matvec(w, add(s_q, s_v))))


def score_sum_mlp(s_q: Tensor, s_v: Tensor, mlp: ScoreMlp, dropout_fn=None) -> Tensor:
    """Per-answer scores sigmoid(MLP(s_q + s_v))."""
    return sigmoid(mlp.apply_vec(add(s_q, s_v), dropout_fn))


def score_cat_mlp(s_q: Tensor, s_v: Tensor, mlp: ScoreMlp, dropout_fn=None) -> Tensor:
    """Per-answer scores sigmoid(MLP([s_q; s_v]))."""
    return sigmoid(mlp.apply_vec(concat_vecs([s_q, s_v]), dropout_fn))


CLAMP = 1e-7


def multilabel_loss(scores: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid scores against [0,1] targets.

    Scores are clamped to [1e-7, 1 - 1e-7] before the logs, so the loss is
    finite for any score vector.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != scores.shape:
        raise ShapeError(f"targets {targets.shape} do not match scores {scores.shape}")
    if np.any(targets < 0.0) or np.any(targets > 1.0):
        raise ValueError("targets must lie in [0, 1]")
    s = clip(scores, CLAMP, 1.0 - CLAMP)
    pos = mul(Tensor(targets), log(s))
    neg = mul(Tensor(1.0 - targets), log(add_scalar(scale(s, -1.0), 1.0)))
    return scale(mean(add(pos, neg)), -1.0)


def param_count(tensors) -> int:
    """Total number of scalars across an iterable of (name, Tensor) pairs."""
    return int(sum(t.data.size for _, t in tensors))
