"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable operation records its parents and a closure that maps the
upstream gradient to one gradient per parent.  ``backward`` walks the graph in
reverse topological order.  Storage is a contiguous row-major numpy buffer;
dtype follows the inputs (float32 for training, float64 in gradient checks).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    # make ``ndarray <op> Tensor`` defer to the reflected Tensor operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p: float):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def backward(self, grad=None) -> None:
        backward(self, grad)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float32)
    return Tensor(arr)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- graph traversal -------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad=None) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node.

    Repeated calls add to existing gradients; call ``zero_grad`` between steps.
    """
    if grad is None:
        if loss.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    else:
        grad = np.asarray(grad, dtype=loss.dtype).reshape(loss.shape)
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): grad}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = g.copy() if node._backward is None else g
        else:
            node.grad = node.grad + g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# -- elementwise arithmetic ------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    return _make(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    return _make(np.maximum(a.data, 0), (a,), lambda g: (g * (a.data > 0),))


def silu(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * s
    return _make(out, (a,), lambda g: (g * (s + out * (1.0 - s)),))


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(a: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    x = a.data
    x2 = x * x
    inner = _GELU_C * (x + 0.044715 * (x2 * x))
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _make(out, (a,), bw)


def where(cond, a, b) -> Tensor:
    """Select from ``a`` where ``cond`` (a constant boolean array) holds, else ``b``."""
    cond = np.asarray(cond, dtype=bool)
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out = np.where(cond, a.data, b.data)

    def bw(g):
        ga = _unbroadcast(np.where(cond, g, 0), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.where(cond, 0, g), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw)


# -- reductions and shape ops ----------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    return sum_(a, axis, keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                 lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return _make(np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (_unbroadcast(g, a.shape),))


def getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]

    def bw(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        return (buf,)

    return _make(np.array(out), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _make(out, tensors, bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) if axis >= 0
                   else reshape(t, t.shape[:t.ndim + axis + 1] + (1,) + t.shape[t.ndim + axis + 1:])
                   for t in map(as_tensor, tensors)], axis=axis)


def take(a: Tensor, indices, axis: int) -> Tensor:
    """Gather ``indices`` (constant integer array) along ``axis``."""
    indices = np.asarray(indices, dtype=np.int64)
    out = np.take(a.data, indices, axis=axis)

    def bw(g):
        buf = np.zeros_like(a.data)
        moved = np.moveaxis(buf, axis, 0)
        g_moved = np.moveaxis(g, axis, 0)
        np.add.at(moved, indices, g_moved)
        return (buf,)

    return _make(out, (a,), bw)


# -- linear algebra --------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch extents not broadcastable: {a.shape} @ {b.shape}") from exc

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                # shared weight: fold every batch axis into one GEMM
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, (a, b), bw)


# -- fused normalization / probability kernels -----------------------------

def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Max-stabilized softmax; ``mask`` (boolean, broadcastable) marks allowed entries.

    Entries outside the mask behave as -inf.  A row with no allowed entry (or
    whose entries are all -inf) returns all zeros instead of NaN.
    """
    data = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        data = np.where(mask, data, -np.inf)
    m = np.max(data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (e / np.where(s == 0, 1.0, s)).astype(x.dtype, copy=False)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw)



def _lastsum(a: np.ndarray) -> np.ndarray:
    """Sum over the last axis, keepdims; a GEMV is much faster than ufunc.reduce for short axes."""
    n = a.shape[-1]
    a = np.ascontiguousarray(a)
    return (a.reshape(-1, n) @ np.ones((n, 1), a.dtype)).reshape(a.shape[:-1] + (1,))


def _lastmean(a: np.ndarray) -> np.ndarray:
    return _lastsum(a) * (1.0 / a.shape[-1])

def rms_norm(x: Tensor, weight: Tensor | None, eps: float = 1e-6) -> Tensor:
    """y = x / sqrt(mean(x^2) + eps) * weight over the last axis."""
    if weight is not None and weight.shape != (x.shape[-1],):
        raise ShapeError(f"rms_norm weight {weight.shape} does not match last extent of {x.shape}")
    xd = x.data
    inv = 1.0 / np.sqrt(_lastmean(xd * xd) + eps)
    xhat = xd * inv
    w = weight.data if weight is not None else None
    out = xhat * w if w is not None else xhat
    n = x.shape[-1]

    def bw(g):
        gx_hat = g * w if w is not None else g
        gx = inv * (gx_hat - xhat * _lastsum(gx_hat * xhat) / n)
        gw = (g * xhat).reshape(-1, n).sum(axis=0) if weight is not None and weight.requires_grad else None
        return gx, gw

    parents = (x, weight) if weight is not None else (x,)
    return _make(out, parents, bw)


def layer_norm(x: Tensor, weight: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-6) -> Tensor:
    """Per-last-axis standardization with optional affine parameters."""
    n = x.shape[-1]
    for p in (weight, bias):
        if p is not None and p.shape != (n,):
            raise ShapeError(f"layer_norm parameter {p.shape} does not match last extent of {x.shape}")
    xd = x.data
    mu = _lastmean(xd)
    xc = xd - mu
    inv = 1.0 / np.sqrt(_lastmean(xc * xc) + eps)
    xhat = xc * inv
    out = xhat
    if weight is not None:
        out = out * weight.data
    if bias is not None:
        out = out + bias.data

    def bw(g):
        gx_hat = g * weight.data if weight is not None else g
        gx = inv * (gx_hat - _lastmean(gx_hat)
                    - xhat * _lastmean(gx_hat * xhat))
        grads = [gx]
        if weight is not None:
            grads.append((g * xhat).reshape(-1, n).sum(axis=0) if weight.requires_grad else None)
        if bias is not None:
            grads.append(g.reshape(-1, n).sum(axis=0) if bias.requires_grad else None)
        return tuple(grads)

    parents = [x] + [p for p in (weight, bias) if p is not None]
    return _make(out, parents, bw)


def rotate_pairs(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate consecutive feature pairs (x0, x1) by angles given via cos/sin tables.

    ``cos`` and ``sin`` broadcast against ``x`` and are constant per pair
    (repeated for both members).
    """
    def rot(a):
        r = np.empty_like(a)
        r[..., 0::2] = -a[..., 1::2]
        r[..., 1::2] = a[..., 0::2]
        return r

    def rot_t(a):
        r = np.empty_like(a)
        r[..., 0::2] = a[..., 1::2]
        r[..., 1::2] = -a[..., 0::2]
        return r

    out = x.data * cos + rot(x.data) * sin
    return _make(out.astype(x.dtype, copy=False), (x,), lambda g: (g * cos + rot_t(g * sin),))


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]


# -- fused kernels used on the hot path ------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight + bias for a 2-d weight shared over all leading axes of x."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} vs weight {weight.shape}")
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out += bias.data
    out = out.reshape(x.shape[:-1] + (weight.shape[1],))

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, (g2.sum(axis=0) if bias.requires_grad else None)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bw)


def modulate(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-6) -> Tensor:
    """(1 + scale) * layer_norm(x) + shift with a parameter-free layer-norm."""
    xd = x.data
    mu = _lastmean(xd)
    xc = xd - mu
    inv = 1.0 / np.sqrt(_lastmean(xc * xc) + eps)
    xhat = xc * inv
    s1 = 1.0 + scale.data
    out = xhat * s1 + shift.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gh = g * s1
            gx = inv * (gh - _lastmean(gh)
                        - xhat * _lastmean(gh * xhat))
        gs = _unbroadcast(g * xhat, scale.shape) if scale.requires_grad else None
        gb = _unbroadcast(g, shift.shape) if shift.requires_grad else None
        return gx, gs, gb

    return _make(out, (x, scale, shift), bw)


def sdpa(q: Tensor, k: Tensor, v: Tensor, mask=None, scale: float | None = None) -> Tensor:
    """softmax(q k^T * scale, masked) v over the last two axes.

    ``mask`` is a boolean array broadcastable to the score shape; query rows
    with no allowed key produce zeros.
    """
    if scale is None:
        scale = 1.0 / float(np.sqrt(q.shape[-1]))
    s = np.matmul(q.data, np.swapaxes(k.data, -1, -2))
    s *= scale
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        s = np.where(mask, s, -np.inf)
    m = s.max(axis=-1, keepdims=True)
    if mask is not None:
        m = np.where(np.isfinite(m), m, 0.0)
    p = np.exp(s - m)
    den = _lastsum(p)
    if mask is not None:
        den = np.where(den == 0, 1.0, den)
    p /= den
    p = p.astype(q.dtype, copy=False)
    out = np.matmul(p, v.data)

    def bw(g):
        gv = _unbroadcast(np.matmul(np.swapaxes(p, -1, -2), g), v.shape) if v.requires_grad else None
        dp = np.matmul(g, np.swapaxes(v.data, -1, -2))
        ds = p * (dp - _lastsum(dp * p))
        ds *= scale
        gq = _unbroadcast(np.matmul(ds, k.data), q.shape) if q.requires_grad else None
        gk = _unbroadcast(np.matmul(np.swapaxes(ds, -1, -2), q.data), k.shape) if k.requires_grad else None
        return gq, gk, gv

    return _make(out, (q, k, v), bw)
