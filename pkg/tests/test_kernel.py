import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from index_skew_lab.kernel import (
    KernelWeights,
    PathGrid,
    VelocityPath,
    kappa,
    kappa_numeric,
    kernel_value,
    lift_path,
)

hursts = st.floats(min_value=0.02, max_value=0.5)


@pytest.mark.parametrize(
    "h,t,s,expected",
    [(0.5, 1.0, 0.0, 1.0), (0.25, 1.0, 0.0, 0.7071068), (0.1, 1.0, 0.5, 0.5901019)],
)
def test_kernel_value_examples(h, t, s, expected):
    assert kernel_value(h, t, s) == pytest.approx(expected, abs=1e-6)


def test_kernel_value_rejects_non_causal_arguments():
    with pytest.raises(ValueError):
        kernel_value(0.3, 0.2, 0.5)


@pytest.mark.parametrize("h", [0.0, -0.1, 0.6, float("nan")])
def test_bad_hurst_rejected(h):
    with pytest.raises(ValueError):
        kappa(h)


def test_kappa_examples():
    assert kappa(0.5) == 0.5
    assert kappa(0.1) == pytest.approx(0.4658475, abs=1e-7)
    assert kappa(1e-12) < 1e-5


def test_kappa_matches_double_integral():
    for h in (0.1, 0.3):
        val, _ = integrate.dblquad(lambda s, t: kernel_value(h, t, s) if s < t else 0.0, 0, 1, 0, lambda t: t)
        assert kappa(h) == pytest.approx(val, rel=1e-5)


def test_lift_examples():
    g = PathGrid(16)
    np.testing.assert_allclose(lift_path(0.5, VelocityPath.constant(g)), g.times, atol=1e-15)
    assert np.all(lift_path(0.2, VelocityPath(g, np.zeros(16))) == 0.0)
    one = lift_path(0.1, VelocityPath.constant(PathGrid(1)))
    assert one[-1] == pytest.approx(math.sqrt(0.2) / 0.6, abs=1e-7)


@given(hursts, st.integers(1, 64))
@settings(max_examples=40, deadline=None)
def test_lift_of_unit_speed_is_exact_at_nodes(h, m):
    # int_0^t K(t, s) ds in closed form; the cell-exact weights reproduce it at every node
    g = PathGrid(m)
    a = h + 0.5
    np.testing.assert_allclose(
        lift_path(h, VelocityPath.constant(g)), math.sqrt(2 * h) * g.times**a / a, rtol=1e-12, atol=1e-15
    )


@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_half_hurst_lift_is_running_integral(m, seed):
    v = np.random.default_rng(seed).standard_normal(m)
    p = VelocityPath(PathGrid(m), v)
    np.testing.assert_allclose(lift_path(0.5, p), p.nodes(), atol=1e-12)


@given(hursts, st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_lift_is_linear(h, a, b, seed):
    rng = np.random.default_rng(seed)
    g = PathGrid(32)
    p, q = VelocityPath(g, rng.standard_normal(32)), VelocityPath(g, rng.standard_normal(32))
    lhs = lift_path(h, p * a + q * b)
    rhs = a * lift_path(h, p) + b * lift_path(h, q)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_batched_and_single_lift_agree():
    kw = KernelWeights(0.15, PathGrid(40))
    V = np.random.default_rng(3).standard_normal((5, 40))
    np.testing.assert_allclose(kw.lift(V), np.stack([kw.lift(v) for v in V]), atol=1e-13)


@pytest.mark.parametrize("h", [0.05, 0.1, 0.3, 0.45])
def test_weights_positive_and_increasing_towards_diagonal(h):
    t = KernelWeights(h, PathGrid(20)).table
    for k in range(1, 21):
        row = t[k, :k]
        assert np.all(row > 0)
        assert np.all(np.diff(row) > 0)
        assert np.all(t[k, k:] == 0)


def test_weights_are_toeplitz():
    t = KernelWeights(0.2, PathGrid(12)).table
    for d in range(1, 13):
        diag = np.array([t[j + d, j] for j in range(13 - d)])
        assert np.ptp(diag) == 0.0


@pytest.mark.parametrize("h,m,expected,tol", [(0.5, 1000, 0.5, 1e-3), (0.1, 2000, 0.4658, 5e-3), (0.25, 2000, 0.5387, 5e-3)])
def test_kappa_numeric_examples(h, m, expected, tol):
    assert kappa_numeric(h, m) == pytest.approx(expected, abs=tol)


@pytest.mark.parametrize("h", [0.05, 0.1, 0.25, 0.4])
def test_kappa_numeric_error_shrinks_with_grid(h):
    errs = [abs(kappa_numeric(h, m) - kappa(h)) for m in (64, 128, 256, 512)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_path_objects():
    g = PathGrid(4)
    assert g.dt == 0.25
    np.testing.assert_allclose(g.midpoints, [0.125, 0.375, 0.625, 0.875])
    p = VelocityPath(g, [1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(p.nodes(), [0, 0.25, 0.75, 1.5, 2.5])
    assert p(0.125) == pytest.approx(0.125)
    with pytest.raises(ValueError):
        p.v[0] = 5.0
    with pytest.raises(ValueError):
        VelocityPath(g, [1.0, 2.0])
    with pytest.raises(ValueError):
        p + VelocityPath.constant(PathGrid(5))
    with pytest.raises(ValueError):
        PathGrid(0)
