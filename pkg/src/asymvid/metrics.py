"""Reconstruction metrics and model-free baselines for masked-frame generation."""

from __future__ import annotations

import numpy as np

PSNR_CAP = 99.0


def psnr(pred: np.ndarray, target: np.ndarray, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 for exact matches."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    mse = float(np.mean((pred.astype(np.float64) - target.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(data_range ** 2 / mse))


def gaussian_kernel(sigma: float = 1.5, truncate: float = 3.5) -> np.ndarray:
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable filtering with mirror padding that repeats the edge sample."""
    r = len(k) // 2
    out = img
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (r, r)
        p = np.pad(out, pad, mode="symmetric")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            acc += w * np.take(p, np.arange(i, i + n), axis=axis)
        out = acc
    return out


def ssim(pred: np.ndarray, target: np.ndarray, data_range: float = 1.0, sigma: float = 1.5) -> float:
    """Structural similarity of two 2-d images with Gaussian-weighted local statistics.

    Local means/variances use population normalization; the mean is taken
    over pixels whose window fits inside the image.
    """
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.ndim == 3 and x.shape[-1] == 1:
        x, y = x[..., 0], y[..., 0]
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError(f"ssim expects matching 2-d images, got {x.shape} and {y.shape}")
    k = gaussian_kernel(sigma)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mx, my = _blur(x, k), _blur(y, k)
    vx = _blur(x * x, k) - mx * mx
    vy = _blur(y * y, k) - my * my
    cxy = _blur(x * y, k) - mx * my
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    r = len(k) // 2
    if s.shape[0] > 2 * r and s.shape[1] > 2 * r:
        s = s[r:-r, r:-r]
    return float(s.mean())


# -- baselines ---------------------------------------------------------------

def copy_nearest_ref(video: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Each masked frame becomes the temporally nearest REF frame (earlier one on ties)."""
    ref = np.asarray(ref, dtype=bool)
    idx = np.flatnonzero(ref)
    if idx.size == 0:
        raise ValueError("no reference frame")
    out = video.copy()
    for k in np.flatnonzero(~ref):
        out[k] = video[idx[np.argmin(np.abs(idx - k))]]
    return out


def linear_interp_ref(video: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Masked frames blend the bracketing REF frames linearly in time; outside the
    bracket the nearest REF frame is copied."""
    ref = np.asarray(ref, dtype=bool)
    idx = np.flatnonzero(ref)
    if idx.size == 0:
        raise ValueError("no reference frame")
    out = video.copy()
    for k in np.flatnonzero(~ref):
        lo = idx[idx < k]
        hi = idx[idx > k]
        if lo.size and hi.size:
            a, b = lo[-1], hi[0]
            wt = (k - a) / (b - a)
            out[k] = (1.0 - wt) * video[a] + wt * video[b]
        else:
            out[k] = video[(lo[-1] if lo.size else hi[0])]
    return out


def masked_frame_scores(pred: np.ndarray, truth: np.ndarray, ref: np.ndarray) -> dict[str, float]:
    """PSNR over all masked pixels, mean SSIM over masked frames, and both for the middle frame."""
    masked = np.flatnonzero(~np.asarray(ref, dtype=bool))
    if masked.size == 0:
        raise ValueError("no masked frame to score")
    mid = len(ref) // 2
    out = {
        "psnr": psnr(pred[masked], truth[masked]),
        "ssim": float(np.mean([ssim(pred[k], truth[k]) for k in masked])),
    }
    if not ref[mid]:
        out["mid_psnr"] = psnr(pred[mid], truth[mid])
        out["mid_ssim"] = ssim(pred[mid], truth[mid])
    return out


def summarize(values: list[float]) -> dict[str, float]:
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std()), "n": int(a.size)}
