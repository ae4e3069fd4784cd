"""Lightweight diffusion transformer operating on high-resolution latents.

Block layout (all sub-layers residual):
  spatial self-attention          AdaIN(t)           per frame, 2D RoPE
  cross-attention                 -                  frame tokens -> that frame's planning tokens
  MLP                             AdaIN(t + pooled planning signal)
  temporal / spatio-temporal attn AdaIN(t)           identity mask over frames
Generator tokens and planning tokens both carry a fixed sin-cos embedding of
their centre in unit image coordinates, so cross-attention can match a region
of the high-resolution grid to the planning token covering it.
Gates and the output head start at zero, so an untrained network maps every
input to a zero velocity through an identity residual stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .attention import MaskKind, TokenLayout, attend, build_rope, identity_mask_batch, init_attention
from .errors import ConfigError, ShapeError
from .planner import frame_embedding
from .rng import Rng
from .tensor import Tensor

ATTENTION_KINDS = ("spatiotemporal", "temporal")


@dataclass(frozen=True)
class DmConfig:
    depth: int = 4
    hidden: int = 64
    mlp: int = 256
    heads: int = 4
    attention: str = "spatiotemporal"
    frames: int = 9
    rows: int = 8
    cols: int = 8
    latent_channels: int = 16
    cond_channels: int = 64
    time_dim: int = 64
    identity_attention: bool = True
    rope_base: float = 10000.0
    T: int = 1000

    def __post_init__(self):
        if self.attention not in ATTENTION_KINDS:
            raise ConfigError(f"unknown DM attention kind {self.attention!r}")
        if self.hidden % self.heads or (self.hidden // self.heads) % 4:
            raise ConfigError("DM head dim must be an integer multiple of 4")


def init_dm(cfg: DmConfig, rng: Rng, prefix: str = "dm") -> nn.Weights:
    w: nn.Weights = {}
    D = cfg.hidden
    nn.init_linear(w, f"{prefix}.embed", cfg.latent_channels, D, rng)
    nn.init_linear(w, f"{prefix}.time.fc1", cfg.time_dim, D, rng)
    nn.init_linear(w, f"{prefix}.time.fc2", D, D, rng)
    nn.init_linear(w, f"{prefix}.cond_pool", cfg.cond_channels, D, rng)
    w[f"{prefix}.uncond_token"] = nn.param(rng.normal(cfg.cond_channels) * 0.02, f"{prefix}.uncond_token")
    for i in range(cfg.depth):
        b = f"{prefix}.blocks.{i}"
        init_attention(w, f"{b}.spatial", D, cfg.heads, rng)
        init_attention(w, f"{b}.cross", D, cfg.heads, rng, kv_dim=cfg.cond_channels)
        nn.init_mlp(w, f"{b}.mlp", D, cfg.mlp, rng)
        init_attention(w, f"{b}.temporal", D, cfg.heads, rng)
        # scale/shift/gate for spatial and temporal attention, driven by t
        nn.init_linear(w, f"{b}.ada_t", D, 6 * D, rng, zero=True)
        # scale/shift/gate for the MLP, driven by t + pooled planning signal
        nn.init_linear(w, f"{b}.ada_mlp", D, 3 * D, rng, zero=True)
    nn.init_linear(w, f"{prefix}.ada_out", D, 2 * D, rng, zero=True)
    nn.init_linear(w, f"{prefix}.out", D, cfg.latent_channels, rng, zero=True)
    return w


def uncond_signal(w: nn.Weights, B: int, K: int, n_low: int = 1, prefix: str = "dm") -> Tensor:
    """The learned unconditional token broadcast to a planning-signal shape."""
    u = w[f"{prefix}.uncond_token"]
    return T.broadcast_to(u, (B, K, n_low, u.shape[0]))


def timestep_features(t, dim: int, T_max: int) -> np.ndarray:
    """Sinusoidal features of the integer diffusion step, deterministic in t."""
    return nn.sinusoidal(np.asarray(t, dtype=np.float64) * (1000.0 / T_max), dim)


def grid_position_embedding(rows: int, cols: int, dim: int, scale: float = 2 * np.pi) -> np.ndarray:
    """[rows * cols, dim] sin-cos features of token centres in unit coordinates.

    Half the channels encode the row, half the column.  Grids of any size share
    the same coordinate frame, so a coarse token and the fine tokens it covers
    get similar features.  With the default scale the fastest component spans
    one period across the image, so no two positions alias.
    """
    rr, cc = np.meshgrid((np.arange(rows) + 0.5) / rows, (np.arange(cols) + 0.5) / cols, indexing="ij")
    return np.concatenate([nn.sinusoidal(rr.ravel() * scale, dim // 2),
                           nn.sinusoidal(cc.ravel() * scale, dim - dim // 2)], axis=-1)


def cond_grid(n_cond: int, rows: int, cols: int) -> tuple[int, int]:
    """Planning-token grid with the aspect of the latent grid; 1x1 for a single token."""
    f = np.sqrt(rows * cols / n_cond)
    lr, lc = int(round(rows / f)), int(round(cols / f))
    if lr * lc != n_cond:
        raise ShapeError(f"{n_cond} planning tokens do not tile a {rows}x{cols} grid")
    return lr, lc


def adain_modulate(x: Tensor, scale, shift, gate) -> Tensor:
    """gate * ((1 + scale) * norm(x) + shift) with a parameter-free layer-norm."""
    return gate * ((1.0 + scale) * T.layer_norm(x, None, None, eps=1e-6) + shift)


def _modulated(x: Tensor, scale, shift) -> Tensor:
    return T.modulate(x, scale, shift, eps=1e-6)


def cross_attend(frame_tokens: Tensor, cond_tokens: Tensor, w: nn.Weights, prefix: str, heads: int) -> Tensor:
    """Each frame's tokens [B, K, N, D] attend to that frame's planning tokens [B, K, M, C]."""
    if frame_tokens.shape[:2] != cond_tokens.shape[:2]:
        raise ShapeError(f"frame tokens {frame_tokens.shape} vs cond tokens {cond_tokens.shape}: frame count mismatch")
    return attend(frame_tokens, cond_tokens, w, prefix, heads)


def _chunks(t: Tensor, n: int, axis: int = -1) -> list[Tensor]:
    size = t.shape[axis] // n
    idx = [slice(None)] * t.ndim
    out = []
    for i in range(n):
        idx[axis] = slice(i * size, (i + 1) * size)
        out.append(t[tuple(idx)])
    return out


def frame_axis_attention(x: Tensor, w: nn.Weights, prefix: str, heads: int, ref: np.ndarray,
                         identity: bool) -> Tensor:
    """Temporal attention: token (f, p) attends to tokens (f', p) of the same spatial index.

    Computed as N independent attentions over the K frames; with ``identity``,
    REF frames attend only to themselves.
    """
    B, K, N, D = x.shape
    xt = T.transpose(x, (0, 2, 1, 3))  # [B, N, K, D]
    mask = None
    if identity:
        eye = np.eye(K, dtype=bool)
        mask = np.where(ref[:, :, None], eye[None], True)[:, None]  # [B, 1, K, K]
    y = attend(xt, xt, w, prefix, heads, mask)
    return T.transpose(y, (0, 2, 1, 3))


def spatiotemporal_attention(x: Tensor, w: nn.Weights, prefix: str, heads: int, ref: np.ndarray,
                             identity: bool, rows: int, cols: int, rope_base: float) -> Tensor:
    B, K, N, D = x.shape
    layout = TokenLayout(K, rows, cols, separators=False)
    kind = MaskKind.IDENTITY_SPATIOTEMPORAL if identity else MaskKind.FULL
    mask = identity_mask_batch(layout, ref, kind) if identity else None
    rope = build_rope(layout, D // heads, rope_base)
    y = attend(x.reshape(B, K * N, D), x.reshape(B, K * N, D), w, prefix, heads, mask, rope, rope)
    return y.reshape(B, K, N, D)


def dm_forward(z_noisy, cond: Tensor | None, t, ref: np.ndarray, cfg: DmConfig, w: nn.Weights,
               rows: int | None = None, cols: int | None = None, prefix: str = "dm",
               attention: str | None = None) -> Tensor:
    """Velocity prediction [B, K, N_high, C_high].

    ``cond`` is the planning signal [B, K, N_low, C_cond]; None selects the
    unconditional token.  ``t`` holds one integer step per sample.
    """
    z = z_noisy if isinstance(z_noisy, Tensor) else Tensor(np.asarray(z_noisy, np.float32))
    B, K, N, C = z.shape
    rows = cfg.rows if rows is None else rows
    cols = cfg.cols if cols is None else cols
    attention = cfg.attention if attention is None else attention
    if attention not in ATTENTION_KINDS:
        raise ConfigError(f"unknown DM attention kind {attention!r}")
    if N != rows * cols or C != cfg.latent_channels:
        raise ShapeError(f"latent {z.shape} does not match a {rows}x{cols} grid of {cfg.latent_channels} channels")
    ref = np.asarray(ref, dtype=bool)
    if ref.shape != (B, K):
        raise ShapeError(f"ref flags {ref.shape} vs latent {z.shape}")
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), (B,))
    if np.any(t < 0) or np.any(t > cfg.T):
        raise ConfigError(f"diffusion step outside [0, {cfg.T}]")
    if cond is None:
        cond = uncond_signal(w, B, K, 1, prefix)
    if cond.shape[:2] != (B, K) or cond.shape[-1] != cfg.cond_channels:
        raise ShapeError(f"planning signal {cond.shape} incompatible with latent {z.shape}")

    D, H = cfg.hidden, cfg.heads
    x = (nn.linear(z, w, f"{prefix}.embed") + frame_embedding(K, D)[None, :, None, :]
         + grid_position_embedding(rows, cols, D))
    temb = Tensor(timestep_features(t, cfg.time_dim, cfg.T))
    c = nn.linear(T.silu(nn.linear(temb, w, f"{prefix}.time.fc1")), w, f"{prefix}.time.fc2")  # [B, D]
    pooled = nn.linear(T.mean(cond, axis=2), w, f"{prefix}.cond_pool")  # [B, K, D]
    c_t = T.silu(c).reshape(B, 1, 1, D)
    c_mlp = T.silu(c.reshape(B, 1, D) + pooled).reshape(B, K, 1, D)
    cond = cond + grid_position_embedding(*cond_grid(cond.shape[2], rows, cols), cfg.cond_channels)

    spatial_layout = TokenLayout(1, rows, cols, separators=False)
    rope = build_rope(spatial_layout, D // H, cfg.rope_base)
    for i in range(cfg.depth):
        b = f"{prefix}.blocks.{i}"
        s1, h1, g1, s2, h2, g2 = _chunks(nn.linear(c_t, w, f"{b}.ada_t"), 6)
        sm, hm, gm = _chunks(nn.linear(c_mlp, w, f"{b}.ada_mlp"), 3)

        h = _modulated(x, s1, h1)
        x = x + g1 * attend(h, h, w, f"{b}.spatial", H, None, rope, rope)

        h = T.layer_norm(x, None, None, eps=1e-6)
        x = x + cross_attend(h, cond, w, f"{b}.cross", H)

        h = _modulated(x, sm, hm)
        x = x + gm * nn.mlp(h, w, f"{b}.mlp")

        h = _modulated(x, s2, h2)
        if attention == "temporal":
            y = frame_axis_attention(h, w, f"{b}.temporal", H, ref, cfg.identity_attention)
        else:
            y = spatiotemporal_attention(h, w, f"{b}.temporal", H, ref, cfg.identity_attention,
                                         rows, cols, cfg.rope_base)
        x = x + g2 * y

    so, ho = _chunks(nn.linear(c_mlp, w, f"{prefix}.ada_out"), 2)
    return nn.linear(_modulated(x, so, ho), w, f"{prefix}.out")
