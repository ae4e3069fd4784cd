"""Analytic cost model of one generation with and without the asymmetric design.

A generation is one planner forward plus ``steps`` generator forwards.  The
four variants toggle (a) whether the planner runs at the low or the high
resolution and (b) whether the generator's frame-mixing layer is temporal or
full spatio-temporal.  Memory is the parameter bytes plus the largest
materialized attention-score tensor, which is what dominates long sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

from .attention import MaskKind, TokenLayout, flops_estimate
from .config import RunConfig
from .generator import init_dm
from .nn import count_params
from .planner import init_mar
from .rng import Rng

BYTES = 4
VARIANTS = (
    # name, asymmetric attention, asymmetric resolution
    ("symmetric", False, False),
    ("asym-resolution", False, True),
    ("asym-attention", True, False),
    ("asym-both", True, True),
)


@dataclass(frozen=True)
class CostRow:
    name: str
    asym_attention: bool
    asym_resolution: bool
    frames: int
    res_high: int
    planner_macs: int
    generator_macs: int
    memory_bytes: int
    budget_bytes: int

    @property
    def total_macs(self) -> int:
        return self.planner_macs + self.generator_macs

    @property
    def out_of_memory(self) -> bool:
        return self.memory_bytes > self.budget_bytes


def generator_macs(cfg: RunConfig, frames: int, grid: int, temporal: bool, cond_tokens: int) -> int:
    """One generator forward: spatial attention + cross-attention + MLP + frame-mixing attention per block."""
    d, h, depth = cfg.dm.hidden, cfg.dm.heads, cfg.dm.depth
    N = grid * grid
    L = frames * N
    spatial = flops_estimate(TokenLayout(1, grid, grid, separators=False), MaskKind.FULL, d, h, 1, 0) * frames
    mix_layout = TokenLayout(frames, grid, grid, separators=False)
    mix = flops_estimate(mix_layout, MaskKind.TEMPORAL if temporal else MaskKind.FULL, d, h, 1, 0)
    c = cfg.dm.cond_channels
    cross = L * d * d * 2 + frames * cond_tokens * c * d * 2 + 2 * L * cond_tokens * d
    mlp = 2 * L * d * cfg.dm.mlp
    return depth * (spatial + mix + cross + mlp)


def planner_macs(cfg: RunConfig, frames: int, grid: int) -> int:
    m = cfg.mar
    return flops_estimate(TokenLayout(frames, grid, grid), MaskKind.FULL, m.hidden, m.heads, m.depth, m.mlp, gated=True)


def _score_bytes(heads: int, queries: int, keys: int) -> int:
    return heads * queries * keys * BYTES


def cost_table(cfg: RunConfig, frames: int, res_high: int, steps: int = 25,
               budget_bytes: int = 192 * 2 ** 20) -> list[CostRow]:
    """Rows for the four design variants at a given clip length and resolution."""
    n_mar = count_params(init_mar(cfg.mar, Rng(0, 0)))
    n_dm = count_params(init_dm(cfg.dm, Rng(0, 0)))
    param_bytes = (n_mar + n_dm) * BYTES
    grid_high = res_high // cfg.patch
    grid_low = res_high // (cfg.plan.low_factor * cfg.patch)
    rows = []
    for name, asym_attn, asym_res in VARIANTS:
        g_plan = grid_low if asym_res else grid_high
        plan_layout = TokenLayout(frames, g_plan, g_plan)
        p_macs = planner_macs(cfg, frames, g_plan)
        g_macs = steps * generator_macs(cfg, frames, grid_high, asym_attn, g_plan * g_plan)
        N = grid_high * grid_high
        plan_scores = _score_bytes(cfg.mar.heads, plan_layout.total_len, plan_layout.total_len)
        mix_keys = frames if asym_attn else frames * N
        gen_scores = max(_score_bytes(cfg.dm.heads, frames * N, mix_keys),
                         _score_bytes(cfg.dm.heads, frames * N, N))
        mem = param_bytes + max(plan_scores, gen_scores)
        rows.append(CostRow(name, asym_attn, asym_res, frames, res_high, p_macs, g_macs, mem, budget_bytes))
    return rows


def format_table(rows: list[CostRow]) -> str:
    head = f"{'variant':<16} {'frames':>6} {'res':>5} {'planner MACs':>14} {'generator MACs':>15} {'total MACs':>14} {'memory MiB':>11}"
    lines = [head, "-" * len(head)]
    for r in rows:
        mem = "out of budget" if r.out_of_memory else f"{r.memory_bytes / 2 ** 20:.1f}"
        lines.append(f"{r.name:<16} {r.frames:>6} {r.res_high:>5} {r.planner_macs:>14,} {r.generator_macs:>15,} "
                     f"{r.total_macs:>14,} {mem:>11}")
    return "\n".join(lines)
