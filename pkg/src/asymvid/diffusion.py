"""Variance-preserving noise schedule, velocity targets, masked losses, DDIM
sampling in the velocity parameterization, and classifier-free guidance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .rng import Rng
from .tensor import Tensor


class EmptyMaskWarning(UserWarning):
    """A masked loss was evaluated with no masked frame; the loss is defined as 0."""


@dataclass(frozen=True)
class DiffusionSchedule:
    """alpha_t = cos(pi/2 * t/T), sigma_t = sin(pi/2 * t/T) for t = 0..T."""
    T: int
    alphas: np.ndarray
    sigmas: np.ndarray

    @classmethod
    def cosine(cls, T: int = 1000) -> "DiffusionSchedule":
        if T < 1:
            raise ConfigError(f"T must be >= 1, got {T}")
        phase = 0.5 * np.pi * np.arange(T + 1, dtype=np.float64) / T
        alphas = np.cos(phase)
        alphas[-1] = 0.0
        sigmas = np.sin(phase)
        return cls(T, alphas, sigmas)

    def coeffs(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ConfigError(f"timestep outside [0, {self.T}]: {t}")
        return self.alphas[t], self.sigmas[t]


@dataclass(frozen=True)
class CfgPolicy:
    scale: float = 1.0
    p_uncond: float = 0.1

    @classmethod
    def interpolation(cls) -> "CfgPolicy":
        return cls(1.0)

    @classmethod
    def image_to_video(cls) -> "CfgPolicy":
        return cls(2.5)


def _per_sample(c: np.ndarray, ndim: int, dtype) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return c.reshape(c.shape + (1,) * (ndim - c.ndim)).astype(dtype)


def _frame_mask(masked, z: np.ndarray) -> np.ndarray | None:
    """Broadcast per-frame flags [B, K] (or [K]) to a latent [B, K, N, C]."""
    if masked is None:
        return None
    m = np.asarray(masked, dtype=bool)
    return m.reshape(m.shape + (1,) * (z.ndim - m.ndim))


def add_noise(z0: np.ndarray, eps: np.ndarray, t, sched: DiffusionSchedule, masked=None) -> np.ndarray:
    """z_t = alpha_t z0 + sigma_t eps on masked frames; reference frames pass through."""
    if z0.shape != eps.shape:
        raise ShapeError(f"z0 {z0.shape} vs eps {eps.shape}")
    a, s = sched.coeffs(t)
    zt = _per_sample(a, z0.ndim, z0.dtype) * z0 + _per_sample(s, z0.ndim, z0.dtype) * eps
    m = _frame_mask(masked, z0)
    return zt if m is None else np.where(m, zt, z0)


def velocity_target(z0: np.ndarray, eps: np.ndarray, t, sched: DiffusionSchedule) -> np.ndarray:
    """v_t = alpha_t eps - sigma_t z0."""
    a, s = sched.coeffs(t)
    return _per_sample(a, z0.ndim, z0.dtype) * eps - _per_sample(s, z0.ndim, z0.dtype) * z0


def predict_x0_eps(z_t: np.ndarray, v: np.ndarray, t, sched: DiffusionSchedule):
    """Invert (z_t, v) -> (z0_hat, eps_hat)."""
    a, s = sched.coeffs(t)
    a = _per_sample(a, z_t.ndim, z_t.dtype)
    s = _per_sample(s, z_t.ndim, z_t.dtype)
    return a * z_t - s * v, s * z_t + a * v


def masked_mse(pred: Tensor, target: np.ndarray, masked) -> Tensor:
    """Mean squared error over the elements of masked frames only.

    ``masked`` holds per-frame flags [B, K]; the sum of M * (pred - target)^2
    is divided by the number of masked elements.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    m = _frame_mask(masked, target)
    M = np.broadcast_to(m, target.shape).astype(pred.dtype)
    count = float(M.sum())
    if count == 0:
        warnings.warn("no masked frame in batch; loss defined as 0", EmptyMaskWarning, stacklevel=2)
        return T.sum_(pred * 0.0)
    diff = (pred - target.astype(pred.dtype)) * M
    return T.sum_(diff * diff) * (1.0 / count)


def masked_diffusion_loss(v_pred: Tensor, v_target: np.ndarray, masked) -> Tensor:
    return masked_mse(v_pred, v_target, masked)


def ddim_step(z_t: np.ndarray, v_pred: np.ndarray, t: int, t_prev: int,
              sched: DiffusionSchedule, masked=None) -> np.ndarray:
    """Deterministic DDIM update from t to t_prev in the v-parameterization."""
    if t_prev > t or t_prev < 0:
        raise ConfigError(f"DDIM step must go down in t: {t} -> {t_prev}")
    if t_prev == t:
        return z_t.copy()
    x0, eps = predict_x0_eps(z_t, v_pred, t, sched)
    a, s = sched.alphas[t_prev], sched.sigmas[t_prev]
    if t_prev == 0:
        z_prev = x0
    else:
        z_prev = (a * x0 + s * eps).astype(z_t.dtype)
    m = _frame_mask(masked, z_t)
    return z_prev if m is None else np.where(m, z_prev, z_t)


def ddim_timesteps(steps: int, T: int) -> list[int]:
    """Descending uniform grid from T down to 0 with ``steps`` intervals."""
    if steps < 1:
        raise ConfigError(f"need at least one sampling step, got {steps}")
    ts = np.floor(np.linspace(T, 0, steps + 1) + 0.5).astype(int)
    if np.any(np.diff(ts) >= 0):
        raise ConfigError(f"{steps} steps do not give a strictly decreasing grid over T={T}")
    return [int(t) for t in ts]


def cfg_dropout(cond: Tensor, uncond: Tensor, p: float, rng: Rng) -> tuple[Tensor, np.ndarray]:
    """Replace each sample's whole planning signal by the unconditional token with probability p.

    Returns the mixed signal and the per-sample drop flags.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"dropout probability {p} outside [0, 1]")
    B = cond.shape[0]
    drop = rng.bernoulli(p, B)
    if not drop.any():
        return cond, drop
    u = T.broadcast_to(uncond, cond.shape)
    return T.where(drop.reshape((B,) + (1,) * (cond.ndim - 1)), u, cond), drop


def guided_velocity(v_cond: np.ndarray, v_uncond: np.ndarray, scale: float) -> np.ndarray:
    return v_uncond + scale * (v_cond - v_uncond)


# velocity(z_t, t, conditional) -> v
VelocityFn = Callable[[np.ndarray, np.ndarray, bool], np.ndarray]


def sample(velocity: VelocityFn, z_ref: np.ndarray, ref: np.ndarray, steps: int,
           cfg: CfgPolicy, rng: Rng, sched: DiffusionSchedule) -> np.ndarray:
    """Generate the masked frames of ``z_ref`` [B, K, N, C] by DDIM.

    ``velocity`` evaluates the generator for a batch at integer step t; its third
    argument selects the conditional (planning signal) or unconditional branch.
    Reference frames of the result are ``z_ref`` bit-exactly.
    """
    ref = np.asarray(ref, dtype=bool)
    if ref.shape != z_ref.shape[:2]:
        raise ShapeError(f"ref flags {ref.shape} vs latent {z_ref.shape}")
    masked = ~ref
    noise = rng.normal(z_ref.shape, dtype=z_ref.dtype)
    z = np.where(_frame_mask(masked, z_ref), noise, z_ref)
    ts = ddim_timesteps(steps, sched.T)
    B = z_ref.shape[0]
    for t, t_prev in zip(ts[:-1], ts[1:]):
        tb = np.full(B, t, dtype=np.int64)
        v = velocity(z, tb, True)
        if cfg.scale != 1.0:
            v = guided_velocity(v, velocity(z, tb, False), cfg.scale)
        z = ddim_step(z, v, t, t_prev, sched, masked)
    z = np.where(_frame_mask(masked, z_ref), z, z_ref)
    return z
