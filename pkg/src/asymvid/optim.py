"""AdamW with decoupled weight decay, and the warm-up + cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import Tensor


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()}, 0)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0,
              lr_scale: dict[str, float] | None = None) -> None:
    """One in-place AdamW update of ``params``.

    Parameters missing from ``grads`` are treated as having zero gradient;
    ``lr_scale`` multiplies the rate of the named parameters.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    b1, b2 = betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        rate = lr * lr_scale.get(name, 1.0) if lr_scale else lr
        if weight_decay:
            p.data *= 1.0 - rate * weight_decay
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data -= (rate * update).astype(p.data.dtype, copy=False)


def cosine_lr(step: int, total_steps: int, base_lr: float, warmup_steps: int = 0) -> float:
    """Linear warm-up to ``base_lr`` then half-cosine decay to zero at ``total_steps``."""
    if warmup_steps > total_steps:
        raise ConfigError(f"warmup_steps ({warmup_steps}) exceeds total_steps ({total_steps})")
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps and step < warmup_steps:
        return base_lr * step / warmup_steps
    span = total_steps - warmup_steps
    if span == 0:
        return base_lr
    progress = (step - warmup_steps) / span
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total
