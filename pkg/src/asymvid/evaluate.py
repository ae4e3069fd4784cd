"""Masked-frame evaluation of a trained model on held-out synthetic clips."""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .errors import ConfigError
from .masking import Task, sample_mask
from .metrics import copy_nearest_ref, linear_interp_ref, masked_frame_scores, summarize
from .nn import Weights
from .pipeline import EVAL_OFFSET, Geometry, generate, render_batch
from .rng import STREAM_SAMPLE, Rng

TASKS = {"interp": Task.interpolation(), "i2v": Task.image_to_video()}
DEFAULT_CFG_SCALE = {"interp": 1.0, "i2v": 2.5, "expand": 1.0}


def task_for(name: str, K: int) -> Task:
    if name == "expand":
        return Task.expansion((K + 1) // 2)
    if name not in TASKS:
        raise ConfigError(f"unknown eval task {name!r}; choose interp, i2v or expand")
    return TASKS[name]


def eval_clips(cfg: RunConfig, n: int) -> np.ndarray:
    """The first ``n`` evaluation clips at the final geometry, [n, K, H, W, 1]."""
    geom = Geometry.final(cfg)
    K = cfg.plan.frames[-1]
    return render_batch(cfg, cfg.seed + EVAL_OFFSET, range(n), K, geom).pixels


def evaluate(w: Weights, cfg: RunConfig, task: str = "interp", n: int = 64, steps: int = 25,
             cfg_scale: float | None = None, batch: int = 8, seed: int = 0) -> dict:
    """Per-clip masked-frame PSNR/SSIM for the model and both baselines, with mean and std."""
    clips = eval_clips(cfg, n)
    K = clips.shape[1]
    ref = sample_mask(task_for(task, K), K).ref
    scale = DEFAULT_CFG_SCALE[task] if cfg_scale is None else cfg_scale
    per = {"model": [], "copy_nearest_ref": [], "linear_interp": []}
    for start in range(0, n, batch):
        chunk = clips[start:start + batch]
        refs = np.broadcast_to(ref, chunk.shape[:2]).copy()
        rng = Rng(seed, STREAM_SAMPLE).child(start)
        gen = generate(w, cfg, chunk, refs, steps=steps, cfg_scale=scale, rng=rng)
        for b in range(chunk.shape[0]):
            truth = chunk[b]
            per["model"].append(masked_frame_scores(gen[b], truth, ref))
            per["copy_nearest_ref"].append(masked_frame_scores(copy_nearest_ref(truth, ref), truth, ref))
            per["linear_interp"].append(masked_frame_scores(linear_interp_ref(truth, ref), truth, ref))
    report = {"task": task, "n": n, "steps": steps, "cfg_scale": scale, "frames": K}
    for who, rows in per.items():
        report[who] = {key: summarize([r[key] for r in rows]) for key in rows[0]}
    return report
