"""Multi-head attention over flattened video token sequences.

Covers the token layout (frame-major, row-major, one learnable separator
after each row), the mask regimes (full spatio-temporal, temporal-only, and
their identity variants where clean reference frames only see themselves),
2D rotary position encoding, and an analytic cost model.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import nn
from . import tensor as T
from .errors import ConfigError, ShapeError
from .rng import Rng
from .tensor import Tensor


class Label(str, Enum):
    REF = "REF"
    MASKED = "MASKED"


NOISE = Label.MASKED  # a masked frame is a noised frame on the generator side


def ref_flags(labels: Sequence) -> np.ndarray:
    """Boolean array, True where a frame is a clean reference."""
    if isinstance(labels, np.ndarray) and labels.dtype == bool:
        return labels
    return np.array([Label(lab) is Label.REF for lab in labels], dtype=bool)


class MaskKind(str, Enum):
    FULL = "full"
    TEMPORAL = "temporal"
    SPATIAL = "spatial"
    IDENTITY_SPATIOTEMPORAL = "identity-spatiotemporal"
    IDENTITY_TEMPORAL = "identity-temporal"

    @property
    def base(self) -> "MaskKind":
        return {MaskKind.IDENTITY_SPATIOTEMPORAL: MaskKind.FULL,
                MaskKind.IDENTITY_TEMPORAL: MaskKind.TEMPORAL}.get(self, self)

    @property
    def is_identity(self) -> bool:
        return self in (MaskKind.IDENTITY_SPATIOTEMPORAL, MaskKind.IDENTITY_TEMPORAL)


@dataclass(frozen=True)
class TokenLayout:
    frames: int
    rows: int
    cols: int
    separators: bool = True

    def __post_init__(self):
        if min(self.frames, self.rows, self.cols) < 1:
            raise ConfigError(f"layout extents must be >= 1, got {self}")

    @property
    def row_len(self) -> int:
        return self.cols + (1 if self.separators else 0)

    @property
    def tokens_per_frame(self) -> int:
        return self.rows * self.row_len

    @property
    def patches_per_frame(self) -> int:
        return self.rows * self.cols

    @property
    def total_len(self) -> int:
        return self.frames * self.tokens_per_frame

    @property
    def next_token_positions(self) -> list[int]:
        if not self.separators:
            return []
        return [f * self.tokens_per_frame + r * self.row_len + self.cols
                for f in range(self.frames) for r in range(self.rows)]

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(frame, row, col) per sequence position; separators sit at col == cols."""
        idx = np.arange(self.total_len)
        frame = idx // self.tokens_per_frame
        within = idx % self.tokens_per_frame
        return frame, within // self.row_len, within % self.row_len

    def patch_positions(self) -> np.ndarray:
        """Sequence indices of the image patches (separators excluded), frame-major."""
        _, _, col = self.coords()
        return np.nonzero(col < self.cols)[0]


def build_layout(frames: int, rows: int, cols: int, separators: bool = True) -> TokenLayout:
    return TokenLayout(frames, rows, cols, separators)


@dataclass
class AttentionMask:
    kind: MaskKind
    frame_labels: np.ndarray  # bool per frame, True = REF
    materialized: np.ndarray  # bool [L, L], True = query may attend key


def base_mask(layout: TokenLayout, kind: MaskKind) -> np.ndarray:
    frame, row, col = layout.coords()
    within = row * layout.row_len + col
    kind = MaskKind(kind).base
    if kind is MaskKind.FULL:
        return np.ones((layout.total_len,) * 2, dtype=bool)
    if kind is MaskKind.TEMPORAL:
        return within[:, None] == within[None, :]
    if kind is MaskKind.SPATIAL:
        return frame[:, None] == frame[None, :]
    raise ConfigError(f"unknown mask kind {kind}")


def build_identity_mask(layout: TokenLayout, frame_labels,
                        kind: MaskKind = MaskKind.IDENTITY_SPATIOTEMPORAL) -> AttentionMask:
    """Rows of REF-frame tokens are one-hot on themselves; other rows follow the base layout."""
    ref = ref_flags(frame_labels)
    if len(ref) != layout.frames:
        raise ShapeError(f"{len(ref)} frame labels for a {layout.frames}-frame layout")
    kind = MaskKind(kind)
    mat = base_mask(layout, kind)
    if kind.is_identity:
        frame, _, _ = layout.coords()
        ref_tok = ref[frame]
        mat = np.where(ref_tok[:, None], np.eye(layout.total_len, dtype=bool), mat)
    return AttentionMask(kind, ref, mat)


def identity_mask_batch(layout: TokenLayout, ref: np.ndarray, kind: MaskKind) -> np.ndarray:
    """Batched materialized masks [B, L, L] for per-sample REF flags ``ref`` [B, K]."""
    kind = MaskKind(kind)
    base = base_mask(layout, kind)
    if not kind.is_identity:
        return np.broadcast_to(base, (ref.shape[0],) + base.shape)
    frame, _, _ = layout.coords()
    ref_tok = ref[:, frame]
    eye = np.eye(layout.total_len, dtype=bool)
    return np.where(ref_tok[:, :, None], eye[None], base[None])


# -- rotary position encoding ----------------------------------------------

@dataclass
class RopeTable:
    cos: np.ndarray  # [L, head_dim]
    sin: np.ndarray
    base: float = 10000.0


def rope_angles(rows: np.ndarray, cols: np.ndarray, head_dim: int, base: float = 10000.0):
    if head_dim % 4:
        raise ConfigError(f"2D RoPE needs head_dim divisible by 4, got {head_dim}")
    quarter = head_dim // 4
    freqs = base ** (-np.arange(quarter, dtype=np.float64) / quarter)
    row_ang = np.asarray(rows, np.float64)[:, None] * freqs
    col_ang = np.asarray(cols, np.float64)[:, None] * freqs
    ang = np.concatenate([row_ang, col_ang], axis=-1)  # one angle per pair
    return np.repeat(ang, 2, axis=-1)


def build_rope(layout: TokenLayout, head_dim: int, base: float = 10000.0,
               dtype=np.float32) -> RopeTable:
    """Rows rotate the first half of each head, columns the second half."""
    _, row, col = layout.coords()
    ang = rope_angles(row, col, head_dim, base)
    return RopeTable(np.cos(ang).astype(dtype), np.sin(ang).astype(dtype), base)


def apply_rope2d(x: Tensor, layout: TokenLayout, rope: RopeTable) -> Tensor:
    """Rotate ``x`` [..., L, head_dim] by the 2D positions of ``layout``."""
    if x.shape[-1] % 4:
        raise ConfigError(f"2D RoPE needs head_dim divisible by 4, got {x.shape[-1]}")
    if x.shape[-2] != layout.total_len or rope.cos.shape != x.shape[-2:]:
        raise ShapeError(f"rope table {rope.cos.shape} vs input {x.shape}")
    return T.rotate_pairs(x, rope.cos.astype(x.dtype, copy=False), rope.sin.astype(x.dtype, copy=False))


# -- attention -------------------------------------------------------------

def init_attention(w: nn.Weights, prefix: str, dim: int, heads: int, rng: Rng,
                   kv_dim: int | None = None, qk_norm: bool = True, zero_out: bool = False,
                   scale_out: float = 1.0) -> None:
    """Q/K/V/O projections; with ``qk_norm`` a layer-norm shared across heads on Q and K."""
    if dim % heads:
        raise ConfigError(f"model dim {dim} not divisible by {heads} heads")
    kv_dim = dim if kv_dim is None else kv_dim
    nn.init_linear(w, f"{prefix}.q", dim, dim, rng, bias=False)
    nn.init_linear(w, f"{prefix}.k", kv_dim, dim, rng, bias=False)
    nn.init_linear(w, f"{prefix}.v", kv_dim, dim, rng, bias=False)
    nn.init_linear(w, f"{prefix}.o", dim, dim, rng, bias=False, zero=zero_out, scale=scale_out)
    if qk_norm:
        for which in ("q", "k"):
            nn.init_norm(w, f"{prefix}.{which}_norm", dim // heads, bias=True)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, L, D = x.shape
    return T.transpose(x.reshape(*lead, L, heads, D // heads),
                       tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, H, L, dh = x.shape
    n = len(lead)
    y = T.transpose(x, tuple(range(n)) + (n + 1, n, n + 2))
    return y.reshape(*lead, L, H * dh)


def _qk_norm(x: Tensor, w: nn.Weights, prefix: str, which: str) -> Tensor:
    weight = w.get(f"{prefix}.{which}_norm.weight")
    bias = w.get(f"{prefix}.{which}_norm.bias")
    return T.layer_norm(x, weight, bias, eps=1e-6)


def attend(xq: Tensor, xkv: Tensor, w: nn.Weights, prefix: str, heads: int,
           mask: np.ndarray | None = None, rope_q: RopeTable | None = None,
           rope_k: RopeTable | None = None) -> Tensor:
    """Scaled dot-product attention with QK layer-norm, optional RoPE and boolean mask.

    ``xq`` [..., Lq, D], ``xkv`` [..., Lk, Dkv]; ``mask`` broadcasts to
    [..., Lq, Lk] (a head axis is inserted).  Fully masked query rows yield
    zeros before the output projection.
    """
    dim = w[f"{prefix}.q.weight"].shape[1]
    if dim % heads:
        raise ConfigError(f"model dim {dim} not divisible by {heads} heads")
    dh = dim // heads
    q = _split_heads(nn.linear(xq, w, f"{prefix}.q"), heads)
    k = _split_heads(nn.linear(xkv, w, f"{prefix}.k"), heads)
    v = _split_heads(nn.linear(xkv, w, f"{prefix}.v"), heads)
    if f"{prefix}.q_norm.weight" in w:
        q = _qk_norm(q, w, prefix, "q")
        k = _qk_norm(k, w, prefix, "k")
    if rope_q is not None:
        q = T.rotate_pairs(q, rope_q.cos.astype(q.dtype, copy=False), rope_q.sin.astype(q.dtype, copy=False))
    if rope_k is not None:
        k = T.rotate_pairs(k, rope_k.cos.astype(k.dtype, copy=False), rope_k.sin.astype(k.dtype, copy=False))
    if mask is not None:
        mask = np.expand_dims(np.asarray(mask, dtype=bool), -3)
    out = _merge_heads(T.sdpa(q, k, v, mask, 1.0 / float(np.sqrt(dh))))
    return nn.linear(out, w, f"{prefix}.o")


def mha(x: Tensor, layout: TokenLayout, mask: AttentionMask | np.ndarray | None,
        weights: nn.Weights, rope: RopeTable | None, heads: int, prefix: str = "attn") -> Tensor:
    """Self-attention over a [B, L, D] token sequence laid out per ``layout``."""
    L = layout.total_len
    if x.shape[-2] != L:
        raise ShapeError(f"sequence length {x.shape[-2]} does not match layout length {L}")
    mat = mask.materialized if isinstance(mask, AttentionMask) else mask
    if mat is not None and np.shape(mat)[-2:] != (L, L):
        raise ShapeError(f"mask shape {np.shape(mat)} inconsistent with layout length {L}")
    return attend(x, x, weights, prefix, heads, mat, rope, rope)


# -- analytic cost model ---------------------------------------------------

def keys_per_query(layout: TokenLayout, kind: MaskKind) -> int:
    kind = MaskKind(kind).base
    if kind is MaskKind.FULL:
        return layout.total_len
    if kind is MaskKind.TEMPORAL:
        return layout.frames
    if kind is MaskKind.SPATIAL:
        return layout.tokens_per_frame
    raise ConfigError(f"unknown mask kind {kind}")


def flops_estimate(layout: TokenLayout, mask_kind: MaskKind, dim: int, heads: int, depth: int,
                   mlp_dim: int | None = None, gated: bool = False) -> int:
    """Multiply-accumulate count of a stack of ``depth`` attention+MLP blocks.

    Per block, with L tokens and k keys per query (L for full, K frames for
    temporal, tokens-per-frame for spatial):
        projections  4 L d^2
        scores + AV  2 L k d
        MLP          (3 if gated else 2) L d m
    Identity masks are costed at their base layout (the dense kernel still runs).
    """
    if dim % heads:
        raise ConfigError(f"dim {dim} not divisible by heads {heads}")
    m = 4 * dim if mlp_dim is None else mlp_dim
    L = layout.total_len
    k = keys_per_query(layout, mask_kind)
    per_block = 4 * L * dim * dim + 2 * L * k * dim + (3 if gated else 2) * L * dim * m
    return int(depth * per_block)


def attention_score_term(layout: TokenLayout, mask_kind: MaskKind, dim: int) -> int:
    return 2 * layout.total_len * keys_per_query(layout, mask_kind) * dim


__all__ = [
    "AttentionMask", "Label", "MaskKind", "NOISE", "RopeTable", "TokenLayout",
    "apply_rope2d", "attend", "base_mask", "build_identity_mask", "build_layout",
    "build_rope", "flops_estimate", "identity_mask_batch", "init_attention", "mha", "ref_flags",
]
