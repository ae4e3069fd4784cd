"""Summaries of training logs used by the experiment scripts and acceptance checks."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError


def read_jsonl(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def moving_average(values, window: int = 3) -> np.ndarray:
    """Centred moving average; the window shrinks at the ends instead of padding."""
    v = np.asarray(values, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be a positive odd number, got {window}")
    h = window // 2
    return np.array([v[max(0, i - h):i + h + 1].mean() for i in range(len(v))])


@dataclass(frozen=True)
class QuartileTrend:
    task: str
    first: float  # mean smoothed loss over the first quarter of the stage
    last: float  # mean smoothed loss over the last quarter
    max_rebound: float  # largest smoothed rise above the running minimum, relative

    MAX_INCREASE = 0.05

    @property
    def change(self) -> float:
        return self.last / self.first - 1.0

    @property
    def decreased(self) -> bool:
        return self.last < self.first

    @property
    def improved(self) -> bool:
        """Last quarter below the first, and not more than ``MAX_INCREASE`` above it."""
        return self.decreased and self.change <= self.MAX_INCREASE


def stage_trend(monitor: list[dict], stage: str, task: str, window: int = 3) -> QuartileTrend:
    """First- versus last-quartile held-out loss of one task within one stage.

    Records are ordered by ``stage_step``; quartiles are taken over the stage's
    step range, so the records at both ends belong to the first and last quarter.
    """
    recs = sorted((r for r in monitor if r["stage"] == stage), key=lambda r: r["stage_step"])
    if len(recs) < 4:
        raise ConfigError(f"stage {stage} has {len(recs)} monitor records; need at least 4")
    steps = np.array([r["stage_step"] for r in recs], dtype=np.float64)
    smooth = moving_average([r[task] for r in recs], window)
    span = steps[-1]
    first = smooth[steps <= 0.25 * span].mean()
    last = smooth[steps >= 0.75 * span].mean()
    rebound = float(np.max(smooth / np.minimum.accumulate(smooth)) - 1.0)
    return QuartileTrend(task, float(first), float(last), rebound)
