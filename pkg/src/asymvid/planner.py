"""Masked planning transformer.

Takes low-resolution latents in which masked frames are replaced by a learned
[MASK] embedding and emits one conditioning tensor per frame.  Blocks are
Llama-style: RMS-norm, spatio-temporal attention with QK layer-norm and 2D
RoPE over a row-separated token layout, RMS-norm, SwiGLU MLP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .attention import MaskKind, TokenLayout, attend, build_rope, identity_mask_batch, init_attention
from .data import unpatchify
from .errors import ConfigError, ShapeError, StageError
from .diffusion import masked_mse
from .rng import Rng
from .tensor import Tensor


@dataclass(frozen=True)
class MarConfig:
    depth: int = 6
    hidden: int = 128
    mlp: int = 256
    heads: int = 4
    frames: int = 9
    rows: int = 2
    cols: int = 2
    latent_channels: int = 16
    cond_channels: int = 64
    identity_attention: bool = True
    rope_base: float = 10000.0
    patch: int = 4
    image_channels: int = 1

    def __post_init__(self):
        if self.hidden % self.heads or (self.hidden // self.heads) % 4:
            raise ConfigError("MAR head dim must be an integer multiple of 4")


@dataclass
class MaskedLatentBatch:
    latents: np.ndarray  # [B, K, N_low, C_low]
    ref: np.ndarray  # [B, K] bool
    rows: int
    cols: int

    def __post_init__(self):
        B, K, N, _ = self.latents.shape
        if self.ref.shape != (B, K):
            raise ShapeError(f"ref flags {self.ref.shape} vs latents {self.latents.shape}")
        if N != self.rows * self.cols:
            raise ShapeError(f"{N} tokens per frame for a {self.rows}x{self.cols} grid")

    @property
    def layout(self) -> TokenLayout:
        return TokenLayout(self.latents.shape[1], self.rows, self.cols, separators=True)


def init_mar(cfg: MarConfig, rng: Rng, prefix: str = "mar") -> nn.Weights:
    w: nn.Weights = {}
    D = cfg.hidden
    nn.init_linear(w, f"{prefix}.embed", cfg.latent_channels, D, rng)
    w[f"{prefix}.mask_token"] = nn.param(rng.normal(D) * 0.02, f"{prefix}.mask_token")
    w[f"{prefix}.next_token"] = nn.param(rng.normal(D) * 0.02, f"{prefix}.next_token")
    for i in range(cfg.depth):
        b = f"{prefix}.blocks.{i}"
        nn.init_norm(w, f"{b}.norm1", D)
        init_attention(w, f"{b}.attn", D, cfg.heads, rng, scale_out=1.0 / np.sqrt(2 * cfg.depth))
        nn.init_norm(w, f"{b}.norm2", D)
        nn.init_gated_mlp(w, f"{b}.mlp", D, cfg.mlp, rng)
        w[f"{b}.mlp.down.weight"].data *= 1.0 / np.sqrt(2 * cfg.depth)
    nn.init_norm(w, f"{prefix}.norm_out", D)
    nn.init_linear(w, f"{prefix}.out", D, cfg.cond_channels, rng)
    return w


def init_head(cfg: MarConfig, rng: Rng, prefix: str = "head") -> nn.Weights:
    """Depatchify projection from the planning signal to low-resolution latent channels."""
    w: nn.Weights = {}
    nn.init_linear(w, f"{prefix}.proj", cfg.cond_channels, cfg.patch * cfg.patch * cfg.image_channels, rng)
    return w


def frame_embedding(K: int, dim: int) -> np.ndarray:
    return nn.sinusoidal(np.arange(K), dim, max_period=100.0)


def mar_forward(batch: MaskedLatentBatch, cfg: MarConfig, w: nn.Weights, prefix: str = "mar") -> Tensor:
    """Planning signal [B, K, N_low, C_cond] for a masked low-resolution batch."""
    B, K, N, C = batch.latents.shape
    if C != cfg.latent_channels:
        raise ShapeError(f"latent channels {C} != configured {cfg.latent_channels}")
    D, rows, cols = cfg.hidden, batch.rows, batch.cols
    x = nn.linear(T.Tensor(batch.latents.astype(np.float32)), w, f"{prefix}.embed")  # [B,K,N,D]
    masked = ~batch.ref
    x = T.where(masked[:, :, None, None], w[f"{prefix}.mask_token"], x)
    x = x.reshape(B, K, rows, cols, D)
    sep = T.broadcast_to(w[f"{prefix}.next_token"], (B, K, rows, 1, D))
    x = T.concat([x, sep], axis=3)  # [B,K,rows,cols+1,D]
    x = x + frame_embedding(K, D)[None, :, None, None, :]
    layout = batch.layout
    x = x.reshape(B, layout.total_len, D)

    rope = build_rope(layout, D // cfg.heads, cfg.rope_base)
    kind = MaskKind.IDENTITY_SPATIOTEMPORAL if cfg.identity_attention else MaskKind.FULL
    mask = identity_mask_batch(layout, batch.ref, kind) if cfg.identity_attention else None
    for i in range(cfg.depth):
        b = f"{prefix}.blocks.{i}"
        h = T.rms_norm(x, w[f"{b}.norm1.weight"])
        x = x + attend(h, h, w, f"{b}.attn", cfg.heads, mask, rope, rope)
        h = T.rms_norm(x, w[f"{b}.norm2.weight"])
        x = x + nn.gated_mlp(h, w, f"{b}.mlp")
    x = T.rms_norm(x, w[f"{prefix}.norm_out.weight"])
    x = T.take(x, layout.patch_positions(), axis=1)  # drop separators
    return nn.linear(x, w, f"{prefix}.out").reshape(B, K, N, cfg.cond_channels)


def depatchify_head(signal: Tensor, w: nn.Weights, rows: int, cols: int, patch: int,
                    prefix: str = "head", stage: str | None = None) -> Tensor:
    """Map the planning signal to low-resolution pixels [B, K, rows*p, cols*p, c].

    Only meaningful during the initial planner warm-up; passing a later ``stage``
    raises.
    """
    if stage is not None and stage not in ("s1a", "initial"):
        raise StageError(f"depatchify head is only used in the initial stage, not {stage!r}")
    y = nn.linear(signal, w, f"{prefix}.proj")  # [B,K,N,p*p*c]
    *lead, N, C = y.shape
    c = C // (patch * patch)
    y = y.reshape(*lead, rows, cols, patch, patch, c)
    n = len(lead)
    y = T.transpose(y, tuple(range(n)) + (n, n + 2, n + 1, n + 3, n + 4))
    return y.reshape(*lead, rows * patch, cols * patch, c)


def mar_recon_loss(pred_img: Tensor, target_low: np.ndarray, masked) -> Tensor:
    """Mean squared reconstruction error over masked frames' pixels."""
    return masked_mse(pred_img, target_low, masked)


def target_pixels(latents: np.ndarray, rows: int, cols: int, patch: int) -> np.ndarray:
    return unpatchify(latents, rows, cols, patch)
