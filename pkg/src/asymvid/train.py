"""Execution of a compiled training plan with checkpoints, resume and logs.

Every random draw of step ``s`` in stage ``i`` comes from a stream keyed by
(seed, i, s), and the training data of global step ``g`` are scenes
``g * MAX_BATCH + j``.  Resuming from any checkpoint therefore replays the
exact same trajectory as an uninterrupted run.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint as ckpt_io
from . import tensor as T
from .config import RunConfig
from .diffusion import DiffusionSchedule
from .masking import Stage, Task, draw_ratio, ratio_schedule, sample_mask
from .nn import Weights
from .optim import AdamState, adam_step, clip_grad_norm, cosine_lr
from .pipeline import (HELDOUT_OFFSET, MAX_BATCH, Geometry, init_weights, objective_loss, render_batch,
                       stage_masks, trainable)
from .rng import STREAM_EVAL, STREAM_TRAIN, Rng

LOG_NAME = "train_log.jsonl"
MONITOR_NAME = "monitor.jsonl"
MONITOR_TASKS = ("interpolation", "image_to_video")


@dataclass
class TrainResult:
    weights: Weights
    out_dir: Path
    final_checkpoint: Path | None
    records: list[dict] = field(default_factory=list)
    monitor: list[dict] = field(default_factory=list)
    seconds: float = 0.0


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def stage_lr(cfg: RunConfig, stage: Stage, stage_step: int) -> float:
    """Warm-up + cosine, evaluated so that every update uses a positive rate."""
    warm = int(round(cfg.optim.warmup_frac * stage.steps))
    return cosine_lr(stage_step + 1, stage.steps + 1, cfg.optim.lr, warm + 1 if warm else 0)


def monitor_losses(w: Weights, cfg: RunConfig, stage: Stage, stage_index: int,
                   sched: DiffusionSchedule) -> dict[str, float]:
    """Conditional losses of a fixed held-out batch under interpolation and image-to-video masks.

    Scenes, diffusion steps and noise are identical across calls, so the
    values are comparable over training.
    """
    geom = Geometry.of_stage(cfg, stage)
    seed = cfg.seed + HELDOUT_OFFSET
    batch = render_batch(cfg, seed, range(cfg.monitor_batch), stage.frames, geom)
    out = {}
    with T.no_grad():
        for kind in MONITOR_TASKS:
            ref = np.stack([sample_mask(Task(kind), stage.frames).ref for _ in range(cfg.monitor_batch)])
            rng = Rng(seed, STREAM_EVAL).child(stage_index)
            out[kind] = objective_loss(w, cfg, stage, batch, ref, rng, sched, p_uncond=0.0).item()
    return out


def _make_checkpoint(cfg: RunConfig, w: Weights, adam: AdamState | None, si: int, ss: int, gs: int) -> ckpt_io.Checkpoint:
    return ckpt_io.Checkpoint(
        digest=cfg.digest(),
        params={k: p.data for k, p in w.items()},
        adam_m=dict(adam.m) if adam else {},
        adam_v=dict(adam.v) if adam else {},
        adam_step=adam.step if adam else 0,
        stage_index=si, stage_step=ss, global_step=gs,
        rng={"seed": cfg.seed, "stream": STREAM_TRAIN, "path": [si, ss]},
        config=cfg.dumps(portable=True),
    )


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def train(cfg: RunConfig, out_dir: str | Path | None = None, resume: str | Path | None = None,
          stop_after: int | None = None, force: bool = False,
          progress: Callable[[dict], None] | None = None) -> TrainResult:
    """Run the plan from scratch or from ``resume``; stop early after ``stop_after`` global steps."""
    t_start = time.time()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps())
    stages = cfg.training_plan().stages
    sched = DiffusionSchedule.cosine(cfg.dm.T)
    w = init_weights(cfg)
    for p in w.values():
        p.requires_grad = True

    si = ss = gs = 0
    adam: AdamState | None = None
    log_path, mon_path = out / LOG_NAME, out / MONITOR_NAME
    if resume is not None:
        ck = ckpt_io.load(resume, cfg.digest(), force=force)
        for k, arr in ck.params.items():
            if k not in w or w[k].shape != arr.shape:
                raise ckpt_io.CheckpointError(f"checkpoint table {k} does not match the model")
            w[k].data = arr.copy()
        si, ss, gs = ck.stage_index, ck.stage_step, ck.global_step
        if ck.adam_m:
            adam = AdamState({k: v.copy() for k, v in ck.adam_m.items()},
                             {k: v.copy() for k, v in ck.adam_v.items()}, ck.adam_step)
        records = [r for r in _read_jsonl(log_path) if r.get("step", -1) < gs and r["kind"] == "step"]
        monitor = [r for r in _read_jsonl(mon_path) if r["step"] <= gs]
    else:
        records, monitor = [], []
    _write_jsonl(log_path, records)
    _write_jsonl(mon_path, monitor)
    log_f = log_path.open("a")
    mon_f = mon_path.open("a")

    def emit(f, rec):
        f.write(json.dumps(rec, sort_keys=True) + "\n")
        f.flush()

    def save(name: str, ck_si: int, ck_ss: int, ck_adam) -> Path:
        path = ckpt_io.save(_make_checkpoint(cfg, w, ck_adam, ck_si, ck_ss, gs), out / name)
        emit(log_f, {"kind": "file", "path": path.name, "sha256": sha256_file(path), "step": gs})
        return path

    final = None
    try:
        while si < len(stages):
            st = stages[si]
            params = trainable(w, st.objective, cfg.cond_mode)
            lr_scale = None
            if st.objective == "mdiff" and cfg.optim.planner_lr_scale != 1.0:
                lr_scale = {k: cfg.optim.planner_lr_scale for k in params if k.startswith("mar.")}
            if ss == 0 or adam is None:
                adam = AdamState.for_params(params)
            geom = Geometry.of_stage(cfg, st)
            if st.batch > MAX_BATCH:
                raise ValueError(f"batch {st.batch} exceeds {MAX_BATCH}")
            if ss == 0 and st.objective == "mdiff" and not any(r["stage"] == st.name and r["stage_step"] == 0 for r in monitor):
                rec = {"step": gs, "stage": st.name, "stage_step": 0, **monitor_losses(w, cfg, st, si, sched)}
                monitor.append(rec)
                emit(mon_f, rec)
            while ss < st.steps:
                if stop_after is not None and gs >= stop_after:
                    final = save(f"step_{gs:06d}.ckpt", si, ss, adam)
                    return TrainResult(w, out, final, records, monitor, time.time() - t_start)
                rng = Rng(cfg.seed, STREAM_TRAIN).child(si, ss)
                ratio = None
                if st.task == "random":
                    upper = ratio_schedule(ss, st.steps, st.ratio_hi, st.ratio_lo) if st.ratio_decay else st.ratio_hi
                    ratio = draw_ratio(upper, st.ratio_lo, rng)
                batch = render_batch(cfg, cfg.seed, gs * MAX_BATCH + np.arange(st.batch), st.frames, geom)
                ref = stage_masks(st, st.frames, st.batch, ratio, rng)
                for p in w.values():
                    p.grad = None
                loss = objective_loss(w, cfg, st, batch, ref, rng, sched)
                loss.backward()
                grads = {k: p.grad for k, p in params.items() if p.grad is not None}
                gnorm = clip_grad_norm(grads, cfg.optim.grad_clip)
                lr = stage_lr(cfg, st, ss)
                adam_step(params, grads, adam, lr, cfg.optim.betas, cfg.optim.eps, cfg.optim.weight_decay,
                          lr_scale)
                rec = {"kind": "step", "step": gs, "stage": st.name, "objective": st.objective,
                       "dm_attention": st.dm_attention, "loss": loss.item(), "lr": lr, "ratio": ratio,
                       "grad_norm": gnorm}
                records.append(rec)
                emit(log_f, rec)
                if progress is not None:
                    progress(rec)
                gs += 1
                ss += 1
                if st.objective == "mdiff" and (ss % cfg.monitor_every == 0 or ss == st.steps):
                    mrec = {"step": gs, "stage": st.name, "stage_step": ss,
                            **monitor_losses(w, cfg, st, si, sched)}
                    monitor.append(mrec)
                    emit(mon_f, mrec)
                if gs % cfg.checkpoint_every == 0 and ss < st.steps:
                    save(f"step_{gs:06d}.ckpt", si, ss, adam)
            si, ss = si + 1, 0
            adam = None
            final = save(f"{st.checkpoint}.ckpt", si, 0, None)
        final = save("final.ckpt", si, 0, None)
    finally:
        log_f.close()
        mon_f.close()
    return TrainResult(w, out, final, records, monitor, time.time() - t_start)


def load_weights(path: str | Path, cfg: RunConfig | None = None, force: bool = False) -> tuple[Weights, RunConfig]:
    """Weights and config stored in a checkpoint; ``cfg`` (if given) must match its digest."""
    ck = ckpt_io.load(path, cfg.digest() if cfg is not None else None, force=force)
    run_cfg = cfg if cfg is not None else RunConfig.loads(ck.config)
    w = init_weights(run_cfg)
    for k, arr in ck.params.items():
        w[k].data = arr.copy()
    return w, run_cfg
