"""Glue between data, planner, generator and diffusion: batch preparation,
per-objective losses, and masked-frame generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import downsample, patchify, render_video, scene_for, unpatchify
from .diffusion import (CfgPolicy, DiffusionSchedule, add_noise, cfg_dropout, masked_mse, sample,
                        velocity_target)
from .errors import ConfigError, ShapeError
from .generator import dm_forward, init_dm
from .masking import Stage, Task, sample_mask
from .nn import Weights
from .planner import MaskedLatentBatch, depatchify_head, init_head, init_mar, mar_forward
from .rng import STREAM_INIT, Rng
from .tensor import Tensor

MAX_BATCH = 1024
# dataset seeds for held-out monitoring and evaluation are offset from the training seed
HELDOUT_OFFSET = 7919
EVAL_OFFSET = 104729

SUBSETS = {"mar": ("mar.", "head."), "dm": ("dm.",), "mdiff": ("mar.", "dm.")}


def init_weights(cfg: RunConfig) -> Weights:
    rng = Rng(cfg.seed, STREAM_INIT)
    w: Weights = {}
    w.update(init_mar(cfg.mar, rng.child(0)))
    w.update(init_head(cfg.mar, rng.child(1)))
    w.update(init_dm(cfg.dm, rng.child(2)))
    return w


def trainable(w: Weights, objective: str, cond_mode: str = "planner") -> dict[str, Tensor]:
    prefixes = SUBSETS[objective]
    if cond_mode == "uncond":
        prefixes = tuple(p for p in prefixes if p == "dm.")
    return {k: v for k, v in w.items() if k.startswith(prefixes)}


def to_latent_scale(pixels: np.ndarray) -> np.ndarray:
    return (pixels * 2.0 - 1.0).astype(np.float32)


def from_latent_scale(z: np.ndarray) -> np.ndarray:
    return np.clip((z.astype(np.float32) + 1.0) * 0.5, 0.0, 1.0)


@dataclass
class Geometry:
    res_high: int
    res_low: int
    patch: int

    @property
    def rows_high(self) -> int:
        return self.res_high // self.patch

    @property
    def low_factor(self) -> int:
        return self.res_high // self.res_low

    @property
    def rows_low(self) -> int:
        return self.res_low // self.patch

    @classmethod
    def of_stage(cls, cfg: RunConfig, stage: Stage) -> "Geometry":
        return cls(stage.res_high, stage.res_low, cfg.patch)

    @classmethod
    def final(cls, cfg: RunConfig) -> "Geometry":
        return cls(cfg.plan.res_high[-1], cfg.plan.res_low, cfg.patch)


@dataclass
class LatentBatch:
    pixels: np.ndarray  # [B, K, H, W, c] in [0, 1] at the batch resolution
    z_high: np.ndarray  # [B, K, N_high, C]
    z_low: np.ndarray  # [B, K, N_low, C]
    geom: Geometry


def encode_pixels(pixels: np.ndarray, geom: Geometry) -> LatentBatch:
    H = pixels.shape[-3]
    if H != geom.res_high:
        raise ShapeError(f"frames of {H}px vs geometry {geom.res_high}px")
    z_high = to_latent_scale(patchify(pixels, geom.patch))
    z_low = to_latent_scale(patchify(downsample(pixels, geom.low_factor), geom.patch))
    return LatentBatch(pixels, z_high, z_low, geom)


def render_batch(cfg: RunConfig, dataset_seed: int, indices, frames: int, geom: Geometry) -> LatentBatch:
    """Render scenes at the canvas size and area-downsample to the geometry's resolution."""
    vids = np.stack([render_video(scene_for(dataset_seed, int(i), frames, cfg.data)) for i in indices])
    f = cfg.data.canvas // geom.res_high
    if f > 1:
        vids = downsample(vids, f)
    return encode_pixels(vids, geom)


def stage_masks(stage: Stage, K: int, B: int, ratio: float | None, rng: Rng) -> np.ndarray:
    if stage.task == "interpolation":
        task = Task.interpolation()
        return np.stack([sample_mask(task, K).ref for _ in range(B)])
    return np.stack([sample_mask(Task.random(ratio), K, rng).ref for _ in range(B)])


def planning_signal(w: Weights, cfg: RunConfig, batch: LatentBatch, ref: np.ndarray) -> Tensor:
    g = batch.geom
    mb = MaskedLatentBatch(batch.z_low, ref, g.rows_low, g.rows_low)
    return mar_forward(mb, cfg.mar, w)


def objective_loss(w: Weights, cfg: RunConfig, stage: Stage, batch: LatentBatch, ref: np.ndarray,
                   rng: Rng, sched: DiffusionSchedule, p_uncond: float | None = None) -> Tensor:
    """Masked loss of one batch under ``stage.objective``.

    mar: low-resolution pixel reconstruction through the depatchify head.
    dm: velocity loss with the unconditional token as the only conditioning.
    mdiff: velocity loss conditioned on the planning signal, with conditioning dropout.
    """
    masked = ~ref
    g = batch.geom
    if stage.objective == "mar":
        signal = planning_signal(w, cfg, batch, ref)
        pred = depatchify_head(signal, w, g.rows_low, g.rows_low, g.patch, stage="s1a")
        target = unpatchify(batch.z_low, g.rows_low, g.rows_low, g.patch)
        return masked_mse(pred, target, masked)

    B = ref.shape[0]
    t = rng.integers(1, sched.T + 1, B)
    eps = rng.normal(batch.z_high.shape)
    z_t = add_noise(batch.z_high, eps, t, sched, masked)
    v_target = velocity_target(batch.z_high, eps, t, sched)
    cond = None
    if stage.objective == "mdiff" and cfg.cond_mode == "planner":
        cond = planning_signal(w, cfg, batch, ref)
        p = cfg.p_uncond if p_uncond is None else p_uncond
        if p > 0:
            cond, _ = cfg_dropout(cond, w["dm.uncond_token"], p, rng)
    elif stage.objective not in ("dm", "mdiff"):
        raise ConfigError(f"unknown objective {stage.objective!r}")
    v = dm_forward(z_t, cond, t, ref, cfg.dm, w, g.rows_high, g.rows_high, attention=stage.dm_attention)
    return masked_mse(v, v_target, masked)


def generate(w: Weights, cfg: RunConfig, pixels: np.ndarray, ref: np.ndarray, steps: int = 25,
             cfg_scale: float = 1.0, rng: Rng | None = None, attention: str = "temporal") -> np.ndarray:
    """Fill the masked frames of ``pixels`` [B, K, H, W, c]; REF frames are returned unchanged.

    The planner runs once; the generator is sampled with DDIM.  Content of
    masked input frames is ignored.
    """
    pixels = np.asarray(pixels, dtype=np.float32)
    ref = np.asarray(ref, dtype=bool)
    if pixels.ndim != 5 or ref.shape != pixels.shape[:2]:
        raise ShapeError(f"pixels {pixels.shape} vs ref flags {ref.shape}")
    if not ref.any(axis=1).all():
        raise ConfigError("every clip needs at least one reference frame")
    geom = Geometry(pixels.shape[-3], cfg.plan.res_low, cfg.patch)
    if pixels.shape[-3] != pixels.shape[-2] or geom.res_high % geom.res_low:
        raise ShapeError(f"frame size {pixels.shape[-3:-1]} incompatible with the model geometry")
    clean = np.where(ref[:, :, None, None, None], pixels, 0.0).astype(np.float32)
    batch = encode_pixels(clean, geom)
    rng = rng if rng is not None else Rng(cfg.seed, 4)
    sched = DiffusionSchedule.cosine(cfg.dm.T)
    with T.no_grad():
        cond = planning_signal(w, cfg, batch, ref) if cfg.cond_mode == "planner" else None

        def velocity(z, t, conditional):
            c = cond if conditional else None
            return dm_forward(z, c, t, ref, cfg.dm, w, geom.rows_high, geom.rows_high,
                              attention=attention).data

        z = sample(velocity, batch.z_high, ref, steps, CfgPolicy(cfg_scale, cfg.p_uncond), rng, sched)
    out = unpatchify(from_latent_scale(z), geom.rows_high, geom.rows_high, geom.patch)
    return np.where(ref[:, :, None, None, None], pixels, out)
