"""Run configuration: one JSON document with a schema version, strict keys."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data import SceneSampler
from .errors import ConfigError
from .generator import DmConfig, init_dm
from .masking import PlanConfig, TrainingPlan, compile_plan
from .nn import count_params
from .planner import MarConfig, init_mar
from .rng import Rng

SCHEMA_VERSION = 1
COND_MODES = ("planner", "uncond")


class AsymmetryWarning(UserWarning):
    """The planner is not the larger model, or does not run at the lower resolution."""


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.99)
    eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_frac: float = 0.05
    grad_clip: float = 1.0
    planner_lr_scale: float = 1.0  # planner rate relative to the generator's in the joint stages


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    mar: MarConfig = field(default_factory=MarConfig)
    dm: DmConfig = field(default_factory=lambda: DmConfig(mlp=128))
    plan: PlanConfig = field(default_factory=PlanConfig)
    data: SceneSampler = field(default_factory=SceneSampler)
    optim: OptimConfig = field(default_factory=OptimConfig)
    patch: int = 4
    p_uncond: float = 0.1
    cond_mode: str = "planner"  # "uncond" trains the generator alone on the learned unconditional token
    checkpoint_every: int = 500
    monitor_every: int = 100
    monitor_batch: int = 8
    output_dir: str = "runs/default"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema version {self.schema_version} != {SCHEMA_VERSION}")
        if self.cond_mode not in COND_MODES:
            raise ConfigError(f"cond_mode must be one of {COND_MODES}")
        if not 0.0 <= self.p_uncond <= 1.0:
            raise ConfigError("p_uncond outside [0, 1]")
        if self.checkpoint_every < 1 or self.monitor_every < 1:
            raise ConfigError("cadences must be positive")
        if self.mar.latent_channels != self.patch * self.patch * self.mar.image_channels:
            raise ConfigError("MAR latent channels must equal patch^2 * image channels")
        if self.dm.latent_channels != self.patch * self.patch * self.mar.image_channels:
            raise ConfigError("DM latent channels must equal patch^2 * image channels")
        if self.mar.cond_channels != self.dm.cond_channels:
            raise ConfigError("planner output channels must match the generator's conditioning width")
        top = self.plan.res_high[-1]
        if top != self.data.canvas:
            raise ConfigError(f"final resolution {top} must equal the scene canvas {self.data.canvas}")
        if self.plan.res_low % self.patch:
            raise ConfigError(f"planner resolution {self.plan.res_low} not a multiple of the patch {self.patch}")
        for res in self.plan.res_high:
            if self.data.canvas % res or res % self.plan.res_low:
                raise ConfigError(f"resolution {res} incompatible with canvas {self.data.canvas} "
                                  f"or planner resolution {self.plan.res_low}")

    # -- derived -----------------------------------------------------------

    def training_plan(self) -> TrainingPlan:
        plan = compile_plan(self.plan)
        if self.cond_mode == "uncond":
            # the planner is unused, so its warm-up stage is dropped
            plan = TrainingPlan(tuple(s for s in plan.stages if s.objective != "mar"))
        return plan

    def final_grid(self) -> tuple[int, int]:
        """(high, low) token grid side at the final resolution."""
        res = self.plan.res_high[-1]
        return res // self.patch, self.plan.res_low // self.patch

    def check_asymmetry(self) -> bool:
        """Warn (never raise) when the planner is not the heavier, lower-resolution model."""
        n_mar = count_params(init_mar(self.mar, Rng(0, 0)))
        n_dm = count_params(init_dm(self.dm, Rng(0, 0)))
        high, low = self.final_grid()
        ok = n_mar > n_dm and low < high
        if not ok:
            warnings.warn(f"asymmetric design violated: planner {n_mar} vs generator {n_dm} params, "
                          f"{low}x{low} vs {high}x{high} tokens", AsymmetryWarning, stacklevel=2)
        return ok

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self, portable: bool = False) -> str:
        """Canonical JSON; ``portable`` drops output_dir so the text is independent of the run location."""
        d = self.to_dict()
        if portable:
            d.pop("output_dir")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        """sha256 over the canonical JSON; output_dir is excluded so moving a run keeps its identity."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _build(cls, d, "config")

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.loads(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def _build(cls, d, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        sub = _NESTED.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from e


_NESTED = {
    (RunConfig, "mar"): MarConfig,
    (RunConfig, "dm"): DmConfig,
    (RunConfig, "plan"): PlanConfig,
    (RunConfig, "data"): SceneSampler,
    (RunConfig, "optim"): OptimConfig,
}


def smoke_config(output_dir: str = "runs/smoke", steps: tuple[int, int, int, int] = (3, 3, 2, 2),
                 seed: int = 0) -> RunConfig:
    """A tiny configuration for tests and smoke runs."""
    return RunConfig(
        seed=seed,
        mar=MarConfig(depth=2, hidden=32, mlp=64, heads=2, cond_channels=16),
        dm=DmConfig(depth=1, hidden=16, mlp=32, heads=2, cond_channels=16, time_dim=16),
        plan=PlanConfig(steps=steps, batch=(2, 2)),
        checkpoint_every=4,
        monitor_every=2,
        monitor_batch=2,
        output_dir=output_dir,
    )
