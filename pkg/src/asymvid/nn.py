"""Elementary layers built on the tensor core.

Weights live in flat ``dict[str, Tensor]`` tables keyed by dotted names; the
functions here read from such a table under a prefix.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

Weights = dict[str, Tensor]


def param(data: np.ndarray, name: str) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float32), requires_grad=True, name=name)


def init_linear(w: Weights, prefix: str, d_in: int, d_out: int, rng: Rng,
                bias: bool = True, zero: bool = False, scale: float = 1.0) -> None:
    if zero:
        W = np.zeros((d_in, d_out), np.float32)
    else:
        W = rng.normal((d_in, d_out)) * (scale / np.sqrt(d_in))
    w[f"{prefix}.weight"] = param(W, f"{prefix}.weight")
    if bias:
        w[f"{prefix}.bias"] = param(np.zeros(d_out, np.float32), f"{prefix}.bias")


def linear(x: Tensor, w: Weights, prefix: str) -> Tensor:
    return T.linear(x, w[f"{prefix}.weight"], w.get(f"{prefix}.bias"))


def init_norm(w: Weights, prefix: str, dim: int, bias: bool = False) -> None:
    w[f"{prefix}.weight"] = param(np.ones(dim, np.float32), f"{prefix}.weight")
    if bias:
        w[f"{prefix}.bias"] = param(np.zeros(dim, np.float32), f"{prefix}.bias")


def sinusoidal(positions: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """[..., dim] table of cos/sin features of (possibly fractional) positions."""
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half, dtype=np.float64) / half)
    ang = np.asarray(positions, dtype=np.float64)[..., None] * freqs
    emb = np.concatenate([np.cos(ang), np.sin(ang)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros(emb.shape[:-1] + (1,))], axis=-1)
    return emb.astype(np.float32)


def init_gated_mlp(w: Weights, prefix: str, dim: int, hidden: int, rng: Rng) -> None:
    init_linear(w, f"{prefix}.gate", dim, hidden, rng, bias=False)
    init_linear(w, f"{prefix}.up", dim, hidden, rng, bias=False)
    init_linear(w, f"{prefix}.down", hidden, dim, rng, bias=False)


def gated_mlp(x: Tensor, w: Weights, prefix: str) -> Tensor:
    """SwiGLU: down(silu(gate(x)) * up(x))."""
    h = T.silu(linear(x, w, f"{prefix}.gate")) * linear(x, w, f"{prefix}.up")
    return linear(h, w, f"{prefix}.down")


def init_mlp(w: Weights, prefix: str, dim: int, hidden: int, rng: Rng) -> None:
    init_linear(w, f"{prefix}.fc1", dim, hidden, rng)
    init_linear(w, f"{prefix}.fc2", hidden, dim, rng)


def mlp(x: Tensor, w: Weights, prefix: str) -> Tensor:
    return linear(T.gelu(linear(x, w, f"{prefix}.fc1")), w, f"{prefix}.fc2")


def count_params(w: Weights) -> int:
    return int(sum(t.size for t in w.values()))
