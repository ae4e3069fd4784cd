"""Gradient-check cases: every differentiable operation and every parameterized
layer, each instantiated with random shapes drawn from a seed."""

from __future__ import annotations

import numpy as np

from asymvid import nn
from asymvid import tensor as T
from asymvid.attention import TokenLayout, attend, build_rope, identity_mask_batch, MaskKind, init_attention
from asymvid.diffusion import masked_mse
from asymvid.generator import DmConfig, dm_forward, init_dm
from asymvid.planner import MarConfig, MaskedLatentBatch, depatchify_head, init_head, init_mar, mar_forward
from asymvid.rng import Rng
from asymvid.tensor import Tensor

from gradcheck import check

N_CONFIGS = 20


def _dims(r, k, lo=1, hi=4):
    return tuple(int(d) for d in r.integers(lo, hi + 1, size=k))


def _away_from_zero(r, shape, gap=0.1):
    x = r.standard_normal(shape)
    return np.where(np.abs(x) < gap, np.sign(x) * gap + x, x)


def _weights_case(build, forward, r, max_coords=12):
    """Gradient check over every weight tensor of a layer (random coordinate subset)."""
    w = build()
    names = sorted(w)
    arrays = [w[n].data.astype(np.float64) for n in names]
    # zero-initialized tensors would hide bugs behind zero gradients
    arrays = [a if np.any(a) else r.standard_normal(a.shape) * 0.3 for a in arrays]

    def fn(*ts):
        return forward(dict(zip(names, ts)))

    return fn, arrays, max_coords


# -- elementwise ------------------------------------------------------------

def case_add(r):
    m, n = _dims(r, 2)
    return (lambda a, b: a + b), [r.standard_normal((m, n)), r.standard_normal((n,))]


def case_sub(r):
    m, n = _dims(r, 2)
    return (lambda a, b: a - b), [r.standard_normal((m, 1)), r.standard_normal((m, n))]


def case_mul(r):
    m, n = _dims(r, 2)
    return (lambda a, b: a * b), [r.standard_normal((m, n)), r.standard_normal((1, n))]


def case_div(r):
    m, n = _dims(r, 2)
    return (lambda a, b: a / b), [r.standard_normal((m, n)), np.abs(r.standard_normal((m, n))) + 0.5]


def case_neg(r):
    return (lambda a: -a), [r.standard_normal(_dims(r, 2))]


def case_power(r):
    p = float(r.choice([2.0, 3.0, 0.5, -1.0]))
    return (lambda a: a ** p), [np.abs(r.standard_normal(_dims(r, 2))) + 0.5]


def case_exp(r):
    return T.exp, [r.standard_normal(_dims(r, 2))]


def case_log(r):
    return T.log, [np.abs(r.standard_normal(_dims(r, 2))) + 0.2]


def case_sqrt(r):
    return T.sqrt, [np.abs(r.standard_normal(_dims(r, 2))) + 0.2]


def case_tanh(r):
    return T.tanh, [r.standard_normal(_dims(r, 3))]


def case_sigmoid(r):
    return T.sigmoid, [r.standard_normal(_dims(r, 3))]


def case_relu(r):
    return T.relu, [_away_from_zero(r, _dims(r, 3))]


def case_silu(r):
    return T.silu, [r.standard_normal(_dims(r, 3)) * 2]


def case_gelu(r):
    return T.gelu, [r.standard_normal(_dims(r, 3)) * 2]


def case_where(r):
    shape = _dims(r, 2)
    cond = r.random(shape) < 0.5
    return (lambda a, b: T.where(cond, a, b)), [r.standard_normal(shape), r.standard_normal(shape[-1:])]


# -- reductions and shape ops --------------------------------------------------

def case_sum(r):
    shape = _dims(r, 3)
    axis = int(r.integers(0, 3))
    keep = bool(r.integers(0, 2))
    return (lambda a: T.sum_(a, axis, keep)), [r.standard_normal(shape)]


def case_mean(r):
    shape = _dims(r, 3)
    axis = (0, 2) if r.integers(0, 2) else None
    return (lambda a: T.mean(a, axis)), [r.standard_normal(shape)]


def case_reshape(r):
    a, b, c = _dims(r, 3)
    return (lambda x: x.reshape(c, a * b)), [r.standard_normal((a, b, c))]


def case_transpose(r):
    perm = tuple(int(i) for i in r.permutation(3))
    return (lambda x: T.transpose(x, perm)), [r.standard_normal(_dims(r, 3))]


def case_broadcast(r):
    m, n = _dims(r, 2)
    return (lambda x: T.broadcast_to(x, (3, m, n))), [r.standard_normal((m, 1))]


def case_getitem(r):
    n = int(r.integers(3, 6))
    idx = r.integers(0, n, size=4)  # duplicates accumulate
    return (lambda x: x[idx, 1:]), [r.standard_normal((n, 3))]


def case_concat(r):
    m, n, k = _dims(r, 3)
    return (lambda a, b: T.concat([a, b], axis=1)), [r.standard_normal((m, n)), r.standard_normal((m, k))]


def case_stack(r):
    shape = _dims(r, 2)
    return (lambda a, b: T.stack([a, b], axis=-1)), [r.standard_normal(shape), r.standard_normal(shape)]


def case_take(r):
    n = int(r.integers(2, 5))
    idx = r.integers(0, n, size=5)
    return (lambda x: T.take(x, idx, axis=1)), [r.standard_normal((2, n, 3))]


def case_matmul(r):
    b, m, k, n = _dims(r, 4)
    if r.integers(0, 2):
        return T.matmul, [r.standard_normal((b, m, k)), r.standard_normal((k, n))]
    return T.matmul, [r.standard_normal((2, 1, m, k)), r.standard_normal((b, k, n))]


# -- fused kernels ---------------------------------------------------------------

def case_softmax(r):
    m, n = _dims(r, 2, 2, 5)
    mask = r.random((m, n)) < 0.7
    mask[0] = False  # a fully masked row
    return (lambda x: T.softmax(x, -1, mask)), [r.standard_normal((m, n))]


def case_rms_norm(r):
    shape = _dims(r, 2, 2, 5)
    return (lambda x, w: T.rms_norm(x, w)), [r.standard_normal(shape), r.standard_normal(shape[-1:])]


def case_layer_norm(r):
    shape = _dims(r, 3, 2, 5)
    if r.integers(0, 2):
        return (lambda x: T.layer_norm(x)), [r.standard_normal(shape)]
    return (lambda x, w, b: T.layer_norm(x, w, b)), [r.standard_normal(shape), r.standard_normal(shape[-1:]),
                                                     r.standard_normal(shape[-1:])]


def case_rotate_pairs(r):
    L, half = _dims(r, 2)
    ang = r.uniform(-3, 3, size=(L, half))
    cos, sin = np.repeat(np.cos(ang), 2, -1), np.repeat(np.sin(ang), 2, -1)
    return (lambda x: T.rotate_pairs(x, cos, sin)), [r.standard_normal((2, L, 2 * half))]


def case_linear(r):
    b, m, k, n = _dims(r, 4)
    if r.integers(0, 2):
        return T.linear, [r.standard_normal((b, m, k)), r.standard_normal((k, n)), r.standard_normal((n,))]
    return (lambda x, w: T.linear(x, w)), [r.standard_normal((m, k)), r.standard_normal((k, n))]


def case_modulate(r):
    b, m, d = _dims(r, 3, 2, 4)
    return T.modulate, [r.standard_normal((b, m, d)), r.standard_normal((b, 1, d)), r.standard_normal((b, 1, d))]


def case_sdpa(r):
    b, lq, lk, d = _dims(r, 4, 1, 4)
    mask = r.random((b, lq, lk)) < 0.7
    return (lambda q, k, v: T.sdpa(q, k, v, mask)), [r.standard_normal((b, lq, d)), r.standard_normal((b, lk, d)),
                                                     r.standard_normal((b, lk, d))]


def case_masked_mse(r):
    B, K = _dims(r, 2, 1, 3)
    masked = r.random((B, K)) < 0.6
    masked[0, 0] = True
    target = r.standard_normal((B, K, 2, 3))
    return (lambda p: masked_mse(p, target, masked)), [r.standard_normal((B, K, 2, 3))]


# -- parameterized layers -----------------------------------------------------------

def case_attention(r):
    K, rows, cols = _dims(r, 3, 1, 2)
    heads = int(r.choice([1, 2]))
    D = 8 * heads
    layout = TokenLayout(K, rows, cols)
    ref = r.random((1, K)) < 0.5
    mask = identity_mask_batch(layout, ref, MaskKind.IDENTITY_SPATIOTEMPORAL)
    rope = build_rope(layout, D // heads)
    x = r.standard_normal((1, layout.total_len, D))

    def build():
        w = {}
        init_attention(w, "a", D, heads, Rng(int(r.integers(1 << 30)), 0))
        for n in ("a.q_norm.weight", "a.k_norm.weight"):
            w[n].data = w[n].data + r.standard_normal(w[n].shape).astype(np.float32) * 0.3
        return w

    fn, arrays, mc = _weights_case(build, lambda w: attend(xt[0], xt[0], w, "a", heads, mask, rope, rope), r)
    xt = [Tensor(x)]

    def fn_x(xx, *ws):
        xt[0] = xx
        return fn(*ws)

    return fn_x, [x] + arrays, mc


def case_gated_mlp(r):
    d, h = _dims(r, 2, 2, 5)
    x = r.standard_normal((2, 3, d))

    def build():
        w = {}
        nn.init_gated_mlp(w, "m", d, h, Rng(int(r.integers(1 << 30)), 0))
        return w

    fn, arrays, mc = _weights_case(build, lambda w: nn.gated_mlp(Tensor(x), w, "m"), r)
    return fn, arrays, mc


def case_mlp(r):
    d, h = _dims(r, 2, 2, 5)
    x = r.standard_normal((2, d))

    def build():
        w = {}
        nn.init_mlp(w, "m", d, h, Rng(int(r.integers(1 << 30)), 0))
        return w

    return _weights_case(build, lambda w: nn.mlp(Tensor(x), w, "m"), r)


def case_planner(r):
    K = int(r.integers(2, 4))
    cfg = MarConfig(depth=1, hidden=8, mlp=12, heads=2, frames=K, rows=1, cols=2, cond_channels=6)
    lat = r.standard_normal((1, K, 2, 16))
    ref = r.random((1, K)) < 0.5
    batch = MaskedLatentBatch(lat, ref, 1, 2)
    seed = int(r.integers(1 << 30))
    return _weights_case(lambda: init_mar(cfg, Rng(seed, 0)), lambda w: mar_forward(batch, cfg, w), r, 4)


def case_depatchify(r):
    cfg = MarConfig(cond_channels=5)
    sig = r.standard_normal((1, 2, 4, 5))
    seed = int(r.integers(1 << 30))
    return _weights_case(lambda: init_head(cfg, Rng(seed, 0)),
                         lambda w: depatchify_head(Tensor(sig), w, 2, 2, 4), r)


def case_generator(r):
    K = int(r.integers(2, 4))
    attn = "temporal" if r.integers(0, 2) else "spatiotemporal"
    cfg = DmConfig(depth=1, hidden=8, mlp=8, heads=2, attention=attn, frames=K, rows=1, cols=2,
                   cond_channels=6, time_dim=8)
    z = r.standard_normal((1, K, 2, 16))
    cond = r.standard_normal((1, K, 1, 6))
    ref = r.random((1, K)) < 0.5
    t = int(r.integers(0, 1001))
    seed = int(r.integers(1 << 30))
    return _weights_case(lambda: init_dm(cfg, Rng(seed, 0)),
                         lambda w: dm_forward(Tensor(z), Tensor(cond), t, ref, cfg, w), r, 4)


CASES = {name[5:]: fn for name, fn in sorted(globals().items()) if name.startswith("case_")}


def run_case(name: str, seed: int) -> float:
    r = np.random.default_rng([seed, sum(map(ord, name))])
    built = CASES[name](r)
    fn, arrays = built[0], built[1]
    max_coords = built[2] if len(built) > 2 else None
    return check(fn, arrays, seed=seed, max_coords=max_coords)
