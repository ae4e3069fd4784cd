"""Central finite-difference gradient checker used across the suite."""

from __future__ import annotations

import numpy as np

from asymvid.tensor import Tensor

EPS = 1e-6


FLOOR = 1e-4  # gradients whose norm is below this are compared absolutely


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), FLOOR)
    return float(np.linalg.norm(a - b) / scale)


def check(fn, arrays: list[np.ndarray], seed: int = 0, max_coords: int | None = None) -> float:
    """Largest relative error between analytic and numeric gradients of
    sum(fn(*tensors) * R) with a fixed random projection R.

    ``max_coords`` limits the numeric side to a random subset of coordinates
    per input (the analytic side is compared on the same subset).
    """
    rng = np.random.default_rng(seed)
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*ts)
    R = rng.standard_normal(out.shape)
    (out * R).sum().backward()
    worst = 0.0
    for i, a in enumerate(arrays):
        flat = a.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, max_coords, replace=False)
        num = np.empty(len(coords))
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + EPS
            fp = float((fn(*[Tensor(x) for x in arrays]).data * R).sum())
            flat[c] = orig - EPS
            fm = float((fn(*[Tensor(x) for x in arrays]).data * R).sum())
            flat[c] = orig
            num[j] = (fp - fm) / (2 * EPS)
        g = ts[i].grad
        ana = np.zeros(flat.size) if g is None else g.reshape(-1)
        worst = max(worst, rel_err(ana[coords], num))
    return worst
