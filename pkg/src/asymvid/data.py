"""Procedural bouncing-shapes videos and the dual-resolution patchify compressor."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import STREAM_DATA, Rng


@dataclass(frozen=True)
class Shape:
    kind: str  # "disc" or "square"
    radius: int
    x: float
    y: float
    vx: float
    vy: float
    gray: int  # 1..255


@dataclass(frozen=True)
class SceneSpec:
    canvas: int
    frames: int
    shapes: tuple[Shape, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"canvas": self.canvas, "frames": self.frames,
                "shapes": [asdict(s) for s in self.shapes]}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(int(d["canvas"]), int(d["frames"]), tuple(Shape(**s) for s in d["shapes"]))


def _reflect(p: float, v: float, lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        return lo, v
    # repeated folding handles speeds larger than the free span
    while p < lo or p > hi:
        if p < lo:
            p, v = 2 * lo - p, -v
        if p > hi:
            p, v = 2 * hi - p, -v
    return p, v


def trajectory(shape: Shape, canvas: int, frames: int) -> np.ndarray:
    """Integer centre (x, y) per frame after elastic wall reflection."""
    lo, hi = float(shape.radius), float(canvas - 1 - shape.radius)
    x, y, vx, vy = shape.x, shape.y, shape.vx, shape.vy
    out = np.empty((frames, 2), dtype=np.int64)
    for k in range(frames):
        if k:
            x, vx = _reflect(x + vx, vx, lo, hi)
            y, vy = _reflect(y + vy, vy, lo, hi)
        out[k] = (int(np.floor(x + 0.5)), int(np.floor(y + 0.5)))
    return out


def render_video(spec: SceneSpec, rng: Rng | None = None) -> np.ndarray:
    """Pixels [K, H, W, 1] in [0, 1]; values are multiples of 1/255.

    ``rng`` is accepted for interface symmetry; rendering itself is deterministic.
    """
    H = W = spec.canvas
    for s in spec.shapes:
        if 2 * s.radius + 1 > spec.canvas:
            raise ConfigError(f"shape radius {s.radius} does not fit a {spec.canvas}px canvas")
        if s.kind not in ("disc", "square"):
            raise ConfigError(f"unknown shape kind {s.kind!r}")
    video = np.zeros((spec.frames, H, W), dtype=np.uint8)
    yy, xx = np.mgrid[0:H, 0:W]
    for s in spec.shapes:
        path = trajectory(s, spec.canvas, spec.frames)
        for k, (cx, cy) in enumerate(path):
            if s.kind == "disc":
                inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= s.radius ** 2
            else:
                inside = (np.abs(xx - cx) <= s.radius) & (np.abs(yy - cy) <= s.radius)
            video[k][inside] = s.gray
    return (video.astype(np.float32) / 255.0)[..., None]


@dataclass(frozen=True)
class SceneSampler:
    """Distribution over random scenes."""
    canvas: int = 32
    min_shapes: int = 1
    max_shapes: int = 2
    min_radius: int = 3
    max_radius: int = 6
    min_speed: float = 0.5
    max_speed: float = 2.5

    def sample(self, rng: Rng, frames: int) -> SceneSpec:
        n = int(rng.integers(self.min_shapes, self.max_shapes + 1))
        shapes = []
        for _ in range(n):
            r = int(rng.integers(self.min_radius, min(self.max_radius, (self.canvas - 1) // 2) + 1))
            lo, hi = r, self.canvas - 1 - r
            x, y = rng.uniform(None, lo, hi), rng.uniform(None, lo, hi)
            speed = rng.uniform(None, self.min_speed, self.max_speed)
            ang = rng.uniform(None, 0.0, 2 * np.pi)
            kind = "disc" if rng.uniform() < 0.5 else "square"
            gray = int(rng.integers(96, 256))
            shapes.append(Shape(kind, r, float(x), float(y), float(speed * np.cos(ang)),
                                float(speed * np.sin(ang)), gray))
        return SceneSpec(self.canvas, frames, tuple(shapes))


def scene_for(seed: int, index: int, frames: int, sampler: SceneSampler) -> SceneSpec:
    """The ``index``-th scene of the dataset keyed by ``seed``; pure in its arguments."""
    return sampler.sample(Rng(seed, STREAM_DATA).child(index, frames, sampler.canvas), frames)


def video_batch(seed: int, indices, frames: int, sampler: SceneSampler) -> np.ndarray:
    return np.stack([render_video(scene_for(seed, int(i), frames, sampler)) for i in indices])


def write_manifest(path: str | Path, seed: int, indices, frames: int, sampler: SceneSampler) -> None:
    """One JSON record per line: seed, index and the full scene parameters."""
    with open(path, "w") as fh:
        for i in indices:
            rec = {"seed": seed, "index": int(i), "scene": scene_for(seed, int(i), frames, sampler).to_dict()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[SceneSpec]:
    with open(path) as fh:
        return [SceneSpec.from_dict(json.loads(line)["scene"]) for line in fh if line.strip()]


# -- compressor ------------------------------------------------------------

@dataclass
class LatentVideo:
    tokens: np.ndarray  # [..., K, N, C]
    rows: int
    cols: int
    patch: int
    channels: int  # pixel channels

    @property
    def frames(self) -> int:
        return self.tokens.shape[-3]


def patchify(pixels: np.ndarray, patch: int) -> np.ndarray:
    """[..., H, W, c] -> [..., (H/p)(W/p), p*p*c], row-major tokens, (py, px, c) channels."""
    *lead, H, W, c = pixels.shape
    if H % patch or W % patch:
        raise ShapeError(f"frame {H}x{W} not divisible by patch {patch}")
    r, q = H // patch, W // patch
    x = pixels.reshape(*lead, r, patch, q, patch, c)
    n = len(lead)
    x = x.transpose(*range(n), n, n + 2, n + 1, n + 3, n + 4)
    return np.ascontiguousarray(x.reshape(*lead, r * q, patch * patch * c))


def unpatchify(tokens: np.ndarray, rows: int, cols: int, patch: int) -> np.ndarray:
    *lead, N, C = tokens.shape
    if N != rows * cols or C % (patch * patch):
        raise ShapeError(f"tokens {tokens.shape} do not fit a {rows}x{cols} grid of {patch}px patches")
    c = C // (patch * patch)
    x = tokens.reshape(*lead, rows, cols, patch, patch, c)
    n = len(lead)
    x = x.transpose(*range(n), n, n + 2, n + 1, n + 3, n + 4)
    return np.ascontiguousarray(x.reshape(*lead, rows * patch, cols * patch, c))


def encode_high(pixels: np.ndarray, patch: int = 4) -> LatentVideo:
    """Lossless space-to-depth: every p x p patch becomes one p*p*c channel token."""
    H, W, c = pixels.shape[-3:]
    return LatentVideo(patchify(pixels, patch), H // patch, W // patch, patch, c)


def decode(latent: LatentVideo) -> np.ndarray:
    return unpatchify(latent.tokens, latent.rows, latent.cols, latent.patch)


def downsample(pixels: np.ndarray, factor: int) -> np.ndarray:
    """Area average over factor x factor blocks."""
    *lead, H, W, c = pixels.shape
    if H % factor or W % factor:
        raise ShapeError(f"frame {H}x{W} not divisible by factor {factor}")
    x = pixels.reshape(*lead, H // factor, factor, W // factor, factor, c)
    return x.mean(axis=(-4, -2), dtype=np.float64).astype(pixels.dtype)


def encode_low(pixels: np.ndarray, factor: int = 4, patch: int = 4) -> LatentVideo:
    return encode_high(downsample(pixels, factor) if factor > 1 else pixels, patch)
