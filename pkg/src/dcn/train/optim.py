"""Adam with L2 weight decay, the learning-rate schedule, and dropout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import TrainConfig
from ..tensor import Tensor, mul, ShapeError


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update over every named parameter.

    Weight decay is decoupled: it scales parameters directly by
    lr * weight_decay instead of entering the moment estimates, so the
    shrinkage is not amplified by the RMS normalization. Parameters are
    updated in sorted-name order so the pass is deterministic regardless
    of dict construction order.
    """
    state.step += 1
    t = state.step
    b1, b2, eps = cfg.beta1, cfg.beta2, cfg.adam_eps
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient {g.shape} does not match parameter "
                             f"{name} {p.data.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / corr1
        v_hat = v / corr2
        step = m_hat / (np.sqrt(v_hat) + eps)
        if cfg.weight_decay > 0.0:
            step = step + cfg.weight_decay * p.data
        p.data = p.data - lr * step


def lr_at(epoch: float, cfg: TrainConfig) -> float:
    """Continuously decayed rate: lr * 0.5 ** (epoch / decay_epochs)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr * 0.5 ** (epoch / cfg.decay_epochs)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None,
            train: bool) -> Tensor:
    """Inverted dropout: zero entries with probability p and scale the
    survivors by 1/(1-p) while training; identity at evaluation."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return mul(x, Tensor.constant(keep))
