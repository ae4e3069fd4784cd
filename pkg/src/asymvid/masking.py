"""Frame masks per task, the mask-ratio curriculum, the staged training plan,
and hierarchical (recursive) frame expansion."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .attention import Label, ref_flags
from .errors import ConfigError
from .rng import Rng


@dataclass(frozen=True)
class FrameMask:
    labels: tuple[Label, ...]

    @classmethod
    def from_ref(cls, ref) -> "FrameMask":
        return cls(tuple(Label.REF if r else Label.MASKED for r in ref))

    @property
    def ref(self) -> np.ndarray:
        return ref_flags(self.labels)

    @property
    def masked(self) -> np.ndarray:
        return ~self.ref

    def token_mask(self, n_tokens: int) -> np.ndarray:
        """M: 1 on every token of a MASKED frame, 0 on REF frames; [K, N]."""
        return np.repeat(self.masked.astype(np.float32)[:, None], n_tokens, axis=1)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Task:
    kind: str  # interpolation | image_to_video | expansion | random
    prefix_len: int | None = None
    ratio: float | None = None

    @classmethod
    def interpolation(cls) -> "Task":
        return cls("interpolation")

    @classmethod
    def image_to_video(cls) -> "Task":
        return cls("image_to_video")

    @classmethod
    def expansion(cls, prefix_len: int) -> "Task":
        return cls("expansion", prefix_len=prefix_len)

    @classmethod
    def random(cls, ratio: float) -> "Task":
        return cls("random", ratio=ratio)


TaskKind = Task


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_mask(task: Task, K: int, rng: Rng | None = None) -> FrameMask:
    """REF/MASKED labels for one clip of ``K`` frames."""
    ref = np.zeros(K, dtype=bool)
    if task.kind == "interpolation":
        if K < 3:
            raise ConfigError(f"interpolation needs K >= 3, got {K}")
        ref[0] = ref[-1] = True
    elif task.kind == "image_to_video":
        if K < 2:
            raise ConfigError(f"image_to_video needs K >= 2, got {K}")
        ref[0] = True
    elif task.kind == "expansion":
        p = task.prefix_len
        if p is None or not 1 <= p <= K - 1:
            raise ConfigError(f"expansion prefix {p} invalid for K={K}")
        ref[:p] = True
    elif task.kind == "random":
        if K < 2:
            raise ConfigError(f"random masking needs K >= 2, got {K}")
        if task.ratio is None or not 0.0 <= task.ratio <= 1.0:
            raise ConfigError(f"random mask ratio {task.ratio} outside [0, 1]")
        if rng is None:
            raise ConfigError("random masking needs an rng")
        n_ref = min(max(round_half_up(task.ratio * K), 1), K - 1)
        ref[rng.choice(K, n_ref)] = True
    else:
        raise ConfigError(f"unknown task kind {task.kind!r}")
    return FrameMask.from_ref(ref)


def ratio_schedule(step: int, stage_steps: int, r_hi: float, r_lo: float) -> float:
    """Upper bound of the per-batch ratio draw: linear from ``r_hi`` at step 0 to ``r_lo``."""
    if not 0.0 <= r_lo <= r_hi <= 1.0:
        raise ConfigError(f"invalid ratio range [{r_lo}, {r_hi}]")
    if stage_steps <= 0 or not 0 <= step <= stage_steps:
        raise ConfigError(f"step {step} outside [0, {stage_steps}]")
    return r_hi + (r_lo - r_hi) * (step / stage_steps)


def draw_ratio(upper: float, r_lo: float, rng: Rng) -> float:
    """Per-batch ratio ~ Uniform[r_lo, upper]."""
    if upper <= r_lo:
        return r_lo
    return float(rng.uniform(None, r_lo, upper))


# -- training plan ---------------------------------------------------------

OBJECTIVES = ("mar", "dm", "mdiff")
DM_ATTENTION = ("spatiotemporal", "temporal")


@dataclass(frozen=True)
class Stage:
    name: str
    objective: str  # mar | dm | mdiff
    dm_attention: str
    task: str  # random | interpolation
    ratio_lo: float
    ratio_hi: float
    ratio_decay: bool
    frames: int
    res_low: int  # low-resolution side length in pixels
    res_high: int
    steps: int
    batch: int
    checkpoint: str


@dataclass(frozen=True)
class TrainingPlan:
    stages: tuple[Stage, ...]

    @property
    def total_steps(self) -> int:
        return sum(s.steps for s in self.stages)

    def to_dict(self) -> dict:
        return {"stages": [asdict(s) for s in self.stages]}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingPlan":
        unknown = set(d) - {"stages"}
        if unknown:
            raise ConfigError(f"unknown plan keys {sorted(unknown)}")
        names = {f for f in Stage.__dataclass_fields__}
        stages = []
        for s in d["stages"]:
            bad = set(s) - names
            missing = names - set(s)
            if bad or missing:
                raise ConfigError(f"stage keys: unknown {sorted(bad)}, missing {sorted(missing)}")
            stages.append(Stage(**s))
        plan = cls(tuple(stages))
        validate_plan(plan)
        return plan

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TrainingPlan":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PlanConfig:
    steps: tuple[int, int, int, int] = (8000, 2000, 3000, 2000)
    warmup_ratio: tuple[float, float] = (0.3, 0.6)
    final_ratio: tuple[float, float] = (0.15, 0.6)
    frames: tuple[int, int] = (5, 9)  # initial/joint-model stages, joint-task stage
    res_high: tuple[int, int] = (16, 32)
    batch: tuple[int, int] = (8, 4)
    res_low: int = 8  # planner input side, the same in every stage

    @property
    def low_factor(self) -> int:
        """Downsampling factor from the final generator resolution to the planner's."""
        return self.res_high[-1] // self.res_low


def compile_plan(cfg: PlanConfig = PlanConfig()) -> TrainingPlan:
    """Initial stage (separate warm-ups), joint-model stage, joint-task stage."""
    k0, k1 = cfg.frames
    h0, h1 = cfg.res_high
    r = cfg.res_low
    s1a, s1b, s2, s3 = cfg.steps
    lo, hi = cfg.warmup_ratio
    b0, b1 = cfg.batch
    stages = (
        Stage("s1a", "mar", "spatiotemporal", "random", lo, hi, False, k0, r, h0, s1a, b0, "stage1_mar"),
        Stage("s1b", "dm", "spatiotemporal", "random", lo, hi, False, k0, r, h0, s1b, b0, "stage1_dm"),
        Stage("s2", "mdiff", "temporal", "interpolation", 0.0, 0.0, False, k0, r, h0, s2, b0, "stage2"),
        Stage("s3", "mdiff", "temporal", "random", cfg.final_ratio[0], cfg.final_ratio[1], True,
              k1, r, h1, s3, b1, "stage3"),
    )
    plan = TrainingPlan(tuple(s for s in stages if s.steps > 0))
    validate_plan(plan)
    return plan


def _phase(stage: Stage) -> int:
    if stage.objective in ("mar", "dm"):
        return 1
    return 2 if stage.task == "interpolation" else 3


def validate_plan(plan: TrainingPlan) -> None:
    """Stages must follow warm-ups -> joint interpolation -> joint ratio decay."""
    last_phase = 0
    prev = None
    for s in plan.stages:
        if s.objective not in OBJECTIVES:
            raise ConfigError(f"stage {s.name}: unknown objective {s.objective!r}")
        if s.dm_attention not in DM_ATTENTION:
            raise ConfigError(f"stage {s.name}: unknown dm attention {s.dm_attention!r}")
        if s.task not in ("random", "interpolation"):
            raise ConfigError(f"stage {s.name}: unknown task {s.task!r}")
        if s.steps < 0 or s.batch < 1 or s.frames < 3 or s.res_low < 1 or s.res_high % s.res_low:
            raise ConfigError(f"stage {s.name}: invalid budget or geometry")
        if s.task == "random" and not 0.0 <= s.ratio_lo <= s.ratio_hi <= 1.0:
            raise ConfigError(f"stage {s.name}: invalid ratio range")
        phase = _phase(s)
        if phase < last_phase:
            raise ConfigError(f"stage {s.name} ({s.objective}/{s.task}) is out of order")
        if phase == 2 and s.objective != "mdiff":
            raise ConfigError(f"stage {s.name}: joint-model stage must use the joint objective")
        if phase == 3 and not s.ratio_decay:
            raise ConfigError(f"stage {s.name}: joint-task stage must decay the ratio")
        if prev is not None and phase >= 2 and s.dm_attention == "spatiotemporal" and prev.dm_attention == "temporal":
            raise ConfigError(f"stage {s.name}: cannot switch back to spatio-temporal attention")
        if prev is not None and (s.frames < prev.frames or s.res_high < prev.res_high):
            raise ConfigError(f"stage {s.name}: frames and resolution may only grow")
        last_phase, prev = phase, s


# -- hierarchical expansion ------------------------------------------------

# engine(window, ref) -> filled window; ``window`` is a list of frames with
# None at positions to generate and ``ref`` flags the given frames.
Engine = Callable[[list, np.ndarray], list]


def expanded_length(n0: int, gap: int, levels: int) -> int:
    """Length after ``levels`` rounds of inserting ``gap`` frames between neighbours."""
    return n0 + (n0 - 1) * ((gap + 1) ** levels - 1)


def hierarchical_expand(initial_frames: Sequence[np.ndarray], window_K: int, levels: int,
                        engine: Engine, strides: Sequence[int] | None = None,
                        max_len: int = 4096) -> list[np.ndarray]:
    """Recursively densify a frame sequence with a fixed-size generation window.

    Without ``strides``: each neighbouring pair becomes the two ends of a
    ``window_K``-frame interpolation window, inserting ``window_K - 2`` frames
    per gap at every level.

    With ``strides`` (one per level): the sequence is segmented into clips of
    ``window_K // stride`` frames; each clip is spread ``stride`` apart inside a
    window of ``len(clip) * stride <= window_K`` frames and the window is
    filled, the trailing positions by continuation.
    Each level multiplies the length by its stride.

    Input frames of every level are carried over bit-exactly.
    """
    frames = [np.asarray(f) for f in initial_frames]
    if len(frames) < 2:
        raise ConfigError("need at least two initial frames")
    if strides is not None and len(strides) != levels:
        raise ConfigError(f"{len(strides)} strides for {levels} levels")
    for level in range(levels):
        if strides is None:
            n_next = expanded_length(len(frames), window_K - 2, 1)
        else:
            n_next = len(frames) * strides[level]
        if n_next > max_len:
            raise ConfigError(f"expansion to {n_next} frames exceeds max_len {max_len}")
        frames = (_expand_pairs(frames, window_K, engine) if strides is None
                  else _expand_segments(frames, window_K, strides[level], engine))
    return frames


def _fill(window: list, engine: Engine) -> list:
    ref = np.array([f is not None for f in window])
    out = engine(list(window), ref)
    if len(out) != len(window):
        raise ConfigError(f"engine returned {len(out)} frames for a {len(window)}-frame window")
    # references are reinstated verbatim
    return [window[i] if ref[i] else np.asarray(out[i]) for i in range(len(window))]


def _expand_pairs(frames: list, window_K: int, engine: Engine) -> list:
    if window_K < 3:
        raise ConfigError("interpolation window needs at least 3 frames")
    out = [frames[0]]
    for a, b in zip(frames[:-1], frames[1:]):
        filled = _fill([a] + [None] * (window_K - 2) + [b], engine)
        out.extend(filled[1:])
    return out


def _expand_segments(frames: list, window_K: int, stride: int, engine: Engine) -> list:
    if not 1 <= stride <= window_K:
        raise ConfigError(f"stride {stride} outside [1, {window_K}]")
    per_window = window_K // stride
    out: list = []
    for start in range(0, len(frames), per_window):
        clip = frames[start:start + per_window]
        window: list = [None] * (len(clip) * stride)
        for i, f in enumerate(clip):
            window[i * stride] = f
        out.extend(_fill(window, engine) if stride > 1 else window)
    return out


__all__ = [
    "FrameMask", "PlanConfig", "Stage", "Task", "TaskKind", "TrainingPlan", "compile_plan",
    "draw_ratio", "expanded_length", "hierarchical_expand", "ratio_schedule", "sample_mask",
    "validate_plan",
]
