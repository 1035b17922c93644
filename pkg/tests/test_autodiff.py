import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinnbench import autodiff as ad
from pinnbench.autodiff import EvaluationError, Tape, TapeError


def central_diff(f, x, i, h=1e-5):
    x = np.array(x, dtype=float)
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (f(xp) - f(xm)) / (2 * h)


def test_record_tanh_at_zero():
    t = Tape()
    x = t.input(0.0)
    y = t.record("tanh", [x])
    assert y.value == 0.0


def test_record_mul():
    t = Tape()
    a, b = t.input(3.0), t.input(4.0)
    assert t.record("mul", [a, b]).value == 12.0


def test_division_by_zero_is_explicit():
    t = Tape()
    a, b = t.input(1.0), t.input(0.0)
    with pytest.raises(EvaluationError):
        t.record("div", [a, b])


def test_log_of_nonpositive_is_explicit():
    t = Tape()
    x = t.input(-1.0)
    with pytest.raises(EvaluationError):
        t.record("log", [x])


def test_backward_tanh_at_zero():
    t = Tape()
    x = t.input(0.0)
    y = ad.tanh(x)
    g = t.backward(y)
    assert g[x.idx] == pytest.approx(1.0)


def test_backward_cube():
    t = Tape()
    x = t.input(2.0)
    y = x ** 3
    g = t.backward(y)
    assert g[x.idx] == pytest.approx(12.0)


def test_backward_rejects_foreign_output():
    t1, t2 = Tape(), Tape()
    x = t1.input(1.0)
    y = x * x
    with pytest.raises(TapeError):
        t2.backward(y)


def test_backward_rejects_vector_output():
    t = Tape()
    x = t.input(np.array([1.0, 2.0]))
    y = x * x
    with pytest.raises(TapeError):
        t.backward(y)


UNARY_CASES = [
    ("tanh", 0.7, lambda v: 1 - math.tanh(v) ** 2),
    ("exp", -0.3, math.exp),
    ("log", 1.7, lambda v: 1 / v),
    ("sin", 0.4, math.cos),
    ("cos", 0.4, lambda v: -math.sin(v)),
    ("sqrt", 2.5, lambda v: 0.5 / math.sqrt(v)),
    ("abs", -1.2, lambda v: -1.0),
    ("neg", 0.9, lambda v: -1.0),
]


@pytest.mark.parametrize("op,x0,dfdx", UNARY_CASES)
def test_unary_partials(op, x0, dfdx):
    t = Tape()
    x = t.input(x0)
    y = t.record(op, [x])
    g = t.backward(y)
    assert g[x.idx] == pytest.approx(dfdx(x0), rel=1e-12)


@given(
    a=st.floats(-3, 3),
    b=st.floats(-3, 3).filter(lambda v: abs(v) > 1e-2),
)
@settings(max_examples=50, deadline=None)
def test_binary_ops_match_finite_differences(a, b):
    def build(vals):
        t = Tape()
        x, y = t.input(vals[0]), t.input(vals[1])
        out = x * y + x / y - (x - y) + ad.maximum(x, y)
        return t, [x, y], out

    t, xs, out = build([a, b])
    g = t.backward(out)

    def f(v):
        _, _, o = build(v)
        return o.value

    for i, xi in enumerate(xs):
        fd = central_diff(f, [a, b], i)
        if abs(a - b) < 1e-3:  # maximum kink
            continue
        assert g[xi.idx] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_abs_subgradient_at_zero_is_zero():
    t = Tape()
    x = t.input(0.0)
    y = ad.absolute(x)
    assert t.backward(y)[x.idx] == 0.0


def test_maximum_tie_takes_first_operand():
    t = Tape()
    a, b = t.input(1.0), t.input(1.0)
    y = ad.maximum(a, b)
    g = t.backward(y)
    assert g[a.idx] == 1.0
    assert g[b.idx] == 0.0


def test_gradient_linearity():
    t = Tape()
    x = t.input(0.8)
    f = ad.sin(x) * x
    h = ad.exp(x)
    s = f + h
    gf = t.backward(f)
    gh = t.backward(h)
    gs = t.backward(s)
    assert gs[x.idx] == pytest.approx(gf[x.idx] + gh[x.idx], abs=1e-15)


def test_replay_is_bit_identical():
    t = Tape()
    x = t.input(0.37)
    y = ad.tanh(x * 3.0) + ad.exp(x) * ad.sin(x)
    first = y.value
    t.replay()
    assert y.value == first
    t.set_value(x, 0.37)
    t.replay()
    assert y.value == first


def test_replay_with_new_leaf_values():
    t = Tape()
    x = t.input(1.0)
    y = x * x + ad.cos(x)
    t.set_value(x, 2.0)
    t.replay()
    assert y.value == pytest.approx(4.0 + math.cos(2.0))


def test_operand_indices_precede_node():
    t = Tape()
    x = t.input(1.0)
    y = ad.exp(x) + x
    for i, args in enumerate(t._args):
        assert all(a < i for a in args)
    assert y.idx == len(t) - 1


# -- second derivatives -----------------------------------------------------


def test_second_derivative_cube():
    d2 = ad.derivative_of_gradient(lambda t, xs: xs[0] ** 3, [2.0], 0, 0)
    assert d2 == pytest.approx(12.0)


def test_mixed_partial_of_product():
    d2 = ad.derivative_of_gradient(lambda t, xs: xs[0] * xs[1], [1.3, -0.2], 0, 1)
    assert d2 == pytest.approx(1.0)


@pytest.mark.parametrize("i,j", [(0, 1), (1, 0), (0, 0), (1, 1)])
def test_hessian_symmetry_smooth(i, j):
    def build(t, xs):
        return ad.sin(xs[0] * xs[1]) + ad.exp(xs[0]) * ad.tanh(xs[1])

    x0 = [0.6, -0.4]
    dij = ad.derivative_of_gradient(build, x0, i, j)
    dji = ad.derivative_of_gradient(build, x0, j, i)
    assert abs(dij - dji) <= 1e-10


def test_second_derivative_matches_finite_differences():
    def build(t, xs):
        return ad.tanh(xs[0] * 1.5 + xs[1]) * ad.sin(xs[1])

    x0 = np.array([0.3, -0.7])

    def f(v):
        t = Tape()
        xs = [t.input(c) for c in v]
        return build(t, xs).value

    h = 1e-4
    for i in range(2):
        for j in range(2):
            d2 = ad.derivative_of_gradient(build, x0, i, j)
            xp = x0.copy()
            fd = (
                f(x0 + h * _e(i, 2) + h * _e(j, 2))
                - f(x0 + h * _e(i, 2) - h * _e(j, 2))
                - f(x0 - h * _e(i, 2) + h * _e(j, 2))
                + f(x0 - h * _e(i, 2) - h * _e(j, 2))
            ) / (4 * h * h)
            assert d2 == pytest.approx(fd, rel=1e-5, abs=1e-6)
            del xp


def _e(i, n):
    v = np.zeros(n)
    v[i] = 1.0
    return v


# -- batched / matrix nodes -------------------------------------------------


def test_matmul_gradient():
    rng = np.random.default_rng(0)
    A0 = rng.standard_normal((3, 4))
    B0 = rng.standard_normal((4, 2))
    t = Tape()
    A, B = t.input(A0), t.input(B0)
    out = ad.total(ad.matmul(A, B))
    g = t.backward(out)
    assert np.allclose(g[A.idx], np.ones((3, 2)) @ B0.T)
    assert np.allclose(g[B.idx], A0.T @ np.ones((3, 2)))


def test_bias_broadcast_gradient_sums_over_batch():
    t = Tape()
    X = t.input(np.ones((5, 2)))
    b = t.input(np.array([0.5, -0.5]))
    out = ad.total(X + b)
    g = t.backward(out)
    assert np.allclose(g[b.idx], [5.0, 5.0])


def test_stack_and_col_round_trip_gradients():
    t = Tape()
    x = t.input(np.array([1.0, 2.0, 3.0]))
    y = t.input(np.array([4.0, 5.0, 6.0]))
    m = ad.stack_cols([x, y])
    out = ad.total(ad.col(m, 0) * 2.0 + ad.col(m, 1) * 3.0)
    g = t.backward(out)
    assert np.allclose(g[x.idx], 2.0)
    assert np.allclose(g[y.idx], 3.0)


def test_batched_second_derivative_via_sum_trick():
    # rows are independent, so d(sum du/dx)/dx is the per-row second derivative
    xv = np.array([0.1, 0.5, -0.3])
    t = Tape()
    x = t.input(xv)
    u = ad.tanh(x) * x
    s = ad.total(u)
    g = t.backward(s, wrt=[x], record=True)
    ux = g[x.idx]
    sech2 = 1 - np.tanh(xv) ** 2
    assert np.allclose(ux.value, np.tanh(xv) + xv * sech2)
    uxx = t.backward(ad.total(ux), wrt=[x])[x.idx]
    expected = 2 * sech2 - 2 * xv * sech2 * np.tanh(xv)
    assert np.allclose(uxx, expected, atol=1e-12)


def test_recorded_backward_replays_with_new_values():
    t = Tape()
    x = t.input(0.4)
    y = ad.sin(x) * x
    gx = t.backward(y, wrt=[x], record=True)[x.idx]
    t.set_value(x, 1.1)
    t.replay()
    assert gx.value == pytest.approx(math.sin(1.1) + 1.1 * math.cos(1.1))


def test_nonfinite_forward_value_aborts():
    t = Tape()
    x = t.input(1000.0)
    with pytest.raises(EvaluationError):
        ad.exp(x)  # overflows to inf
