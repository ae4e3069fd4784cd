import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from asymvid import tensor as T
from asymvid.tensor import ShapeError, Tensor, no_grad


def loop_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


def test_matmul_matches_triple_loop():
    r = np.random.default_rng(0)
    a, b = r.standard_normal((4, 5)), r.standard_normal((5, 3))
    np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, loop_matmul(a, b), atol=1e-12)


def test_batched_matmul_broadcasts_batch_axes():
    r = np.random.default_rng(1)
    a, b = r.standard_normal((2, 1, 3, 4)), r.standard_normal((5, 4, 2))
    out = T.matmul(Tensor(a), Tensor(b)).data
    assert out.shape == (2, 5, 3, 2)
    np.testing.assert_allclose(out[1, 3], loop_matmul(a[1, 0], b[3]), atol=1e-12)


@pytest.mark.parametrize("a,b", [((2, 3), (4, 2)), ((3,), (3, 2)), ((2, 3, 4), (3, 4, 2))])
def test_matmul_shape_errors(a, b):
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones(a)), Tensor(np.ones(b)))


def test_linear_equals_matmul_plus_bias():
    r = np.random.default_rng(2)
    x, w, b = r.standard_normal((2, 3, 4)), r.standard_normal((4, 5)), r.standard_normal(5)
    np.testing.assert_allclose(T.linear(Tensor(x), Tensor(w), Tensor(b)).data, x @ w + b, atol=1e-12)


def test_rms_norm_scalar_loop():
    r = np.random.default_rng(3)
    x, w = r.standard_normal((3, 6)), r.standard_normal(6)
    out = T.rms_norm(Tensor(x), Tensor(w), eps=1e-6).data
    for i in range(3):
        ms = sum(v * v for v in x[i]) / 6
        for j in range(6):
            assert out[i, j] == pytest.approx(x[i, j] / np.sqrt(ms + 1e-6) * w[j], rel=1e-10)


def test_layer_norm_scalar_loop():
    r = np.random.default_rng(4)
    x, w, b = r.standard_normal((2, 5)), r.standard_normal(5), r.standard_normal(5)
    out = T.layer_norm(Tensor(x), Tensor(w), Tensor(b), eps=1e-6).data
    for i in range(2):
        mu = sum(x[i]) / 5
        var = sum((v - mu) ** 2 for v in x[i]) / 5
        for j in range(5):
            assert out[i, j] == pytest.approx((x[i, j] - mu) / np.sqrt(var + 1e-6) * w[j] + b[j], rel=1e-9)


def test_modulate_matches_composed_ops():
    r = np.random.default_rng(5)
    x, s, h = r.standard_normal((2, 3, 4)), r.standard_normal((2, 1, 4)), r.standard_normal((2, 1, 4))
    ref = (1 + s) * T.layer_norm(Tensor(x)).data + h
    np.testing.assert_allclose(T.modulate(Tensor(x), Tensor(s), Tensor(h)).data, ref, atol=1e-12)


def test_sdpa_matches_softmax_composition():
    r = np.random.default_rng(6)
    q, k, v = r.standard_normal((2, 3, 4)), r.standard_normal((2, 5, 4)), r.standard_normal((2, 5, 4))
    mask = r.random((2, 3, 5)) < 0.6
    mask[0, 0] = False
    p = T.softmax(Tensor(q @ k.swapaxes(-1, -2) * 0.5), -1, mask).data
    np.testing.assert_allclose(T.sdpa(Tensor(q), Tensor(k), Tensor(v), mask, 0.5).data, p @ v, atol=1e-12)
    assert np.all(T.sdpa(Tensor(q), Tensor(k), Tensor(v), mask, 0.5).data[0, 0] == 0)


def test_softmax_fully_masked_row_is_zero_and_rows_sum_to_one():
    x = Tensor(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    mask = np.array([[True, False, True], [False, False, False]])
    p = T.softmax(x, -1, mask).data
    assert p[0, 1] == 0 and p[0].sum() == pytest.approx(1.0)
    assert np.all(p[1] == 0) and not np.any(np.isnan(p))


def test_gelu_tanh_form():
    x = np.linspace(-4, 4, 17)
    ref = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x ** 3)))
    np.testing.assert_allclose(T.gelu(Tensor(x)).data, ref, atol=1e-12)


def test_backward_accumulates_over_calls_and_shared_uses():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (a * a + a).sum().backward()
    np.testing.assert_allclose(a.grad, [3.0, 5.0])
    (a * 2.0).sum().backward()
    np.testing.assert_allclose(a.grad, [5.0, 7.0])
    a.zero_grad()
    assert a.grad is None


def test_backward_requires_scalar():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (a * 2.0).backward()


def test_no_grad_builds_no_graph():
    a = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        b = a * 3.0
    assert not b.requires_grad and b._parents == ()
    assert (a * 3.0).requires_grad


def test_float32_stays_float32():
    a = Tensor(np.ones((2, 3), np.float32), requires_grad=True)
    out = T.gelu(T.layer_norm(a * 0.5 + 1.0)).sum()
    assert out.dtype == np.float32
    out.backward()
    assert a.grad.dtype == np.float32


def test_stack_and_take_shapes():
    a, b = Tensor(np.zeros((2, 3))), Tensor(np.ones((2, 3)))
    assert T.stack([a, b], axis=1).shape == (2, 2, 3)
    assert T.stack([a, b], axis=-1).shape == (2, 3, 2)
    assert T.take(a, [0, 0, 2], axis=1).shape == (2, 3)


shapes = hnp.array_shapes(min_dims=1, max_dims=3, min_side=1, max_side=4)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_broadcast_add_gradient_sums_to_operand_shape(data):
    shape = data.draw(shapes)
    # drop or collapse leading axes of the second operand
    cut = data.draw(st.integers(0, len(shape) - 1))
    bshape = tuple(1 if data.draw(st.booleans()) else n for n in shape[cut:])
    a = Tensor(np.ones(shape), requires_grad=True)
    b = Tensor(np.ones(bshape), requires_grad=True)
    (a + b).sum().backward()
    assert a.grad.shape == shape and b.grad.shape == bshape
    assert b.grad.sum() == pytest.approx(np.prod(shape))


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, shapes, elements=st.floats(-50, 50)))
def test_softmax_is_a_distribution(x):
    p = T.softmax(Tensor(x), axis=-1).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=3, min_side=2, max_side=5),
                  elements=st.floats(-10, 10)))
def test_layer_norm_output_is_standardized(x):
    if np.any(x.std(axis=-1) < 1e-2):
        return
    y = T.layer_norm(Tensor(x), eps=0.0).data
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-9)
    np.testing.assert_allclose(y.std(axis=-1), 1.0, atol=1e-6)


def test_ndarray_on_the_left_defers_to_tensor():
    a = np.arange(3.0)
    t = Tensor(np.ones(3), requires_grad=True)
    for out in (a * t, a + t, a - t, a / (t + 1.0)):
        assert isinstance(out, Tensor)
    np.testing.assert_allclose((a * t).data, a)
    (a * t).sum().backward()
    np.testing.assert_allclose(t.grad, a)
