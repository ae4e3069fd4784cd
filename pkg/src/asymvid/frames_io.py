"""Binary portable graymap (P5, 8-bit) frame files."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def to_uint8(frame: np.ndarray) -> np.ndarray:
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim == 3 and f.shape[-1] == 1:
        f = f[..., 0]
    if f.ndim != 2:
        raise ValueError(f"expected one gray frame, got shape {f.shape}")
    return np.clip(np.floor(f * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_pgm(path: str | Path, frame: np.ndarray) -> Path:
    """Write a [H, W] or [H, W, 1] frame with values in [0, 1]."""
    img = to_uint8(frame)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]) + img.tobytes())
    return path


def read_pgm(path: str | Path) -> np.ndarray:
    """Frame [H, W, 1] as float32 in [0, 1]."""
    blob = Path(path).read_bytes()
    m = _HEADER.match(blob)
    if m is None:
        raise ValueError(f"{path}: not a binary 8-bit graymap")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    data = blob[m.end():]
    if len(data) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, found {len(data)}")
    img = np.frombuffer(data, dtype=np.uint8).reshape(h, w)
    return (img.astype(np.float32) / 255.0)[..., None]


def write_sequence(out_dir: str | Path, frames: np.ndarray, start: int = 0) -> list[Path]:
    """frame_000.pgm, frame_001.pgm, ... for frames [K, H, W, 1]."""
    out = Path(out_dir)
    return [write_pgm(out / f"frame_{start + i:03d}.pgm", f) for i, f in enumerate(frames)]


def read_sequence(in_dir: str | Path) -> np.ndarray:
    paths = sorted(Path(in_dir).glob("*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no .pgm frames in {in_dir}")
    return np.stack([read_pgm(p) for p in paths])
