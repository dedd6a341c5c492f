from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tempattn import autodiff as ad
from tempattn.autodiff import DimensionError, NumericError, Tape, backward, grad_check

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def test_add_example():
    t = Tape()
    out = t.leaf([1.0, 2.0]) + t.leaf([3.0, 4.0])
    np.testing.assert_array_equal(out.value, [4.0, 6.0])


def test_softmax_uniform():
    t = Tape()
    np.testing.assert_allclose(ad.softmax(t.leaf([0.0, 0.0, 0.0])).value, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_logsumexp_large_values():
    getcontext().prec = 50
    oracle = Decimal(1000) + (Decimal(2)).ln()
    t = Tape()
    got = ad.logsumexp(t.leaf([1000.0, 1000.0])).value
    assert abs(Decimal(float(got)) - oracle) < Decimal("1e-12")
    assert float(got) == pytest.approx(1000.6931, abs=1e-4)


def test_shape_mismatch_names_op():
    t = Tape()
    with pytest.raises(DimensionError, match="matmul"):
        t.leaf(np.ones((2, 3))) @ t.leaf(np.ones((2, 3)))


def test_nonfinite_output_raises():
    t = Tape()
    with pytest.raises(NumericError):
        ad.exp(t.leaf([1000.0]))


def test_tape_is_topologically_ordered():
    t = Tape()
    a, b = t.leaf([1.0, 2.0]), t.leaf([3.0, 4.0])
    ad.tanh(a * b + a).sum()
    for k, node in enumerate(t.nodes):
        assert all(i < k for i in node.inputs)


def test_backward_self_gradient_is_one():
    t = Tape()
    loss = (t.leaf([1.0, 2.0]) * 3.0).sum()
    g = backward(t, loss)
    assert g[loss.id] == pytest.approx(1.0)


def test_backward_requires_scalar():
    t = Tape()
    with pytest.raises(ValueError):
        backward(t, t.leaf([1.0, 2.0]))


def test_unused_leaf_gets_zero_gradient():
    t = Tape()
    a, b = t.leaf([1.0, 2.0]), t.leaf([5.0])
    g = backward(t, (a * a).sum())
    np.testing.assert_array_equal(g.of(b), [0.0])
    np.testing.assert_allclose(g.of(a), [2.0, 4.0])


def test_shared_subexpression_accumulates():
    t = Tape()
    x = t.leaf(3.0)
    y = x * x
    g = backward(t, y + y)
    assert float(g.of(x)) == pytest.approx(12.0)


def test_embedding_gradient_scatter_adds():
    t = Tape()
    table = t.leaf(np.arange(6.0).reshape(3, 2))
    g = backward(t, ad.embedding(table, np.array([2, 0, 2])).sum())
    np.testing.assert_array_equal(g.of(table), [[1, 1], [0, 0], [2, 2]])


def test_logaddexp_large_values():
    t = Tape()
    got = ad.logaddexp(t.leaf([1000.0, -5.0]), t.leaf([1000.0, 3.0])).value
    np.testing.assert_allclose(got, [1000 + np.log(2), 3 + np.log1p(np.exp(-8))], rtol=1e-15)


def test_float32_mode():
    t = Tape(np.float32)
    assert (t.leaf([1.0]) * 2.0).value.dtype == np.float32


# every op, checked against central differences in 64-bit mode
OP_CASES = {
    "matmul": (lambda p: (p["a"] @ p["b"]).sum(), {"a": (2, 3), "b": (3, 4)}),
    "add_broadcast": (lambda p: ad.tanh(p["a"] + p["v"]).sum(), {"a": (2, 3), "v": (3,)}),
    "sub": (lambda p: ((p["a"] - p["b"]) * (p["a"] - p["b"])).sum(), {"a": (3,), "b": (3,)}),
    "mul": (lambda p: (p["a"] * p["b"]).sum(), {"a": (2, 2), "b": (2, 2)}),
    "sigmoid": (lambda p: ad.sigmoid(p["a"]).sum(), {"a": (4,)}),
    "exp": (lambda p: ad.exp(p["a"]).sum(), {"a": (4,)}),
    "softmax": (lambda p: (ad.softmax(p["a"]) * p["w"]).sum(), {"a": (2, 4), "w": (2, 4)}),
    "log_softmax": (lambda p: (ad.log_softmax(p["a"]) * p["w"]).sum(), {"a": (2, 4), "w": (2, 4)}),
    "logsumexp": (lambda p: (ad.logsumexp(p["a"]) * p["w"]).sum(), {"a": (3, 4), "w": (3,)}),
    "concat": (lambda p: (ad.concat([p["a"], p["b"]], axis=-1) * p["w"]).sum(),
               {"a": (2, 2), "b": (2, 3), "w": (2, 5)}),
    "slice": (lambda p: (p["a"][1:3] * p["a"][0:2]).sum(), {"a": (4,)}),
    "embedding": (lambda p: (ad.embedding(p["e"], np.array([1, 1, 0])) * p["w"]).sum(),
                  {"e": (3, 2), "w": (3, 2)}),
    "scalar_mul": (lambda p: ad.scalar_mul(ad.tanh(p["a"]), -2.5).sum(), {"a": (3,)}),
    "transpose": (lambda p: (ad.transpose(p["a"]) @ p["b"]).sum(), {"a": (3, 2), "b": (3, 1)}),
    "pick": (lambda p: ad.pick(ad.log_softmax(p["a"]), np.array([2, 0])).sum(), {"a": (2, 3)}),
    "logaddexp": (lambda p: (ad.logaddexp(p["a"], p["b"]) * p["w"]).sum(), {"a": (2, 3), "b": (3,), "w": (2, 3)}),
    "reshape": (lambda p: (p["a"].reshape(3, 2) @ p["b"]).sum(), {"a": (6,), "b": (2, 2)}),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients(name):
    fn, shapes = OP_CASES[name]
    rng = np.random.default_rng(0)
    params = {k: rng.normal(size=s) for k, s in shapes.items()}
    assert grad_check(fn, params, epsilon=1e-6) < 1e-6


@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_softmax_rows_sum_to_one(x):
    t = Tape()
    p = ad.softmax(t.leaf(x)).value
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert (p >= 0).all()


@given(arrays(np.float64, st.integers(1, 8), elements=finite), st.floats(-500, 500))
def test_logsumexp_shift_invariance(x, c):
    t = Tape()
    a = float(ad.logsumexp(t.leaf(x)).value)
    b = float(ad.logsumexp(t.leaf(x + c)).value)
    assert b - c == pytest.approx(a, abs=1e-9)


@given(arrays(np.float64, (3,), elements=finite), arrays(np.float64, (3,), elements=finite))
def test_gradient_is_linear_in_loss(a, w):
    def run(scale):
        t = Tape()
        x = t.leaf(a)
        return backward(t, ad.scalar_mul((ad.tanh(x) * w).sum(), scale)).of(x)
    np.testing.assert_allclose(run(3.0), 3.0 * run(1.0), rtol=1e-12, atol=1e-15)
