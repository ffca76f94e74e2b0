import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from index_skew_lab.asymptotics import (
    SmileAsymptotics,
    implied_variance_expansion,
    index_skew,
    index_skew_one_factor,
    index_skew_two_factor,
    index_spot_variance,
    most_likely_configuration,
    single_asset_skew,
    vol_curvature_matrices,
)
from index_skew_lab.kernel import kappa
from index_skew_lab.model import (
    Component,
    CorrelationMatrix,
    IndexModel,
    InvalidModelError,
    single_asset_reference,
    to_two_factor,
    two_asset_example,
    two_factor_single_asset,
)

K01 = 0.4658475


def brute_force_skew(model):
    """Direct double loop over the one-factor formula, no vectorisation."""
    n = model.n
    w, s, rho = model.weights, model.sigmas, model.price_corr
    var = sum(w[i] * w[j] * rho[i, j] * s[i] * s[j] for i in range(n) for j in range(n))
    total = 0.0
    for i in range(n):
        big = sum(rho[i, j] * w[j] * s[j] for j in range(n))
        fp = model.components[i].vol.f0_prime
        total += w[i] * big**2 * (2 * fp * kappa(model.hursts[i]) + s[i] ** 2)
    return var, -var + total / var


def random_model(n, seed, rho=0.3):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, n)
    w /= w.sum()
    comps = tuple(
        Component.rough_bergomi(wi, rng.uniform(0.1, 0.5), rng.uniform(-2, 2), rng.uniform(0.05, 0.5)) for wi in w
    )
    return IndexModel(comps, CorrelationMatrix.equicorrelated(n, rho))


def test_spot_variance_examples(ref_model, two_asset):
    assert index_spot_variance(ref_model) == pytest.approx(0.04)
    assert index_spot_variance(two_asset) == pytest.approx(0.0475)
    comps = tuple(Component.rough_bergomi(1 / 3, 0.2, 0.0, 0.1) for _ in range(3))
    assert index_spot_variance(IndexModel(comps, CorrelationMatrix(np.eye(3)))) == pytest.approx(0.04 / 3)


def test_single_asset_skew_examples():
    assert single_asset_skew(Component.rough_bergomi(1, 0.2, 0.0, 0.1)) == 0.0
    assert single_asset_skew(Component.rough_bergomi(1, 0.2, -1.0, 0.1)) == pytest.approx(-K01, abs=1e-7)
    assert single_asset_skew(Component.rough_bergomi(1, 0.3, -1.5, 0.5)) == pytest.approx(-0.75)
    with pytest.raises(InvalidModelError):
        single_asset_skew(Component.rough_bergomi(1, -0.2, -1.0, 0.1))


def test_one_factor_reference(ref_model):
    sa = index_skew_one_factor(ref_model)
    assert sa.variance_skew == pytest.approx(-0.1863390, abs=1e-7)
    assert sa.vol_skew == pytest.approx(-K01, abs=1e-7)
    assert sa.spot_vol == pytest.approx(0.2)


@given(st.floats(0.05, 0.6), st.floats(-3, 3), st.floats(0.02, 0.5))
@settings(max_examples=40, deadline=None)
def test_single_component_reduction(sigma, eta, h):
    m = single_asset_reference(sigma, eta, h)
    sa = index_skew_one_factor(m)
    assert sa.variance_skew == pytest.approx(2 * sigma * eta * kappa(h), rel=1e-12, abs=1e-15)
    assert sa.vol_skew == pytest.approx(single_asset_skew(m.components[0]), rel=1e-12, abs=1e-15)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(-0.15, 0.9))
@settings(max_examples=40, deadline=None)
def test_one_factor_matches_brute_force(n, seed, rho):
    m = random_model(n, seed, rho)
    var, skew = brute_force_skew(m)
    sa = index_skew_one_factor(m)
    assert sa.spot_variance == pytest.approx(var, rel=1e-12)
    assert sa.variance_skew == pytest.approx(skew, rel=1e-10, abs=1e-14)


def test_two_factor_example():
    sa = index_skew_two_factor(two_factor_single_asset(0.2, 1.0, 0.1, -0.5))
    assert sa.variance_skew == pytest.approx(-0.0931695, abs=1e-7)


def test_curvature_matrices_have_zero_diagonal():
    phis = vol_curvature_matrices(to_two_factor(two_asset_example(eta=(-1, 2)), -0.5))
    assert np.all(phis[:, 0, 0] == 0) and np.all(phis[:, 1, 1] == 0)
    np.testing.assert_allclose(phis[:, 0, 1], [0.2 * kappa(0.1), -0.6 * kappa(0.2)])


def test_two_factor_without_vol_of_vol_matches_one_factor(two_asset):
    for c in (-0.9, 0.0, 0.4):
        one = index_skew(two_asset)
        two = index_skew(to_two_factor(two_asset, c))
        assert two.variance_skew == pytest.approx(one.variance_skew, rel=1e-13)


def test_two_factor_approaches_one_factor_near_full_anticorrelation():
    m = random_model(3, 11)
    one = index_skew(m).variance_skew
    two = index_skew(to_two_factor(m, -0.999)).variance_skew
    assert two == pytest.approx(one, rel=3e-3)


def test_mode_checks(ref_model):
    with pytest.raises(InvalidModelError):
        index_skew_two_factor(ref_model)
    with pytest.raises(InvalidModelError):
        index_skew_one_factor(two_factor_single_asset())


def test_comonotone_constant_vol_is_flat_for_equal_vols():
    comps = tuple(Component.rough_bergomi(w, 0.25, 0.0, h) for w, h in [(0.3, 0.1), (0.7, 0.3)])
    m = IndexModel(comps, CorrelationMatrix.equicorrelated(2, 0.999))
    assert abs(index_skew(m).variance_skew) < 1e-3


def test_comonotone_constant_vol_skew_is_vol_dispersion():
    # with unequal vols the comonotone basket still skews by the weighted dispersion of the vols
    m = two_asset_example(rho=0.999999)
    w, s = m.weights, m.sigmas
    assert index_skew(m).variance_skew == pytest.approx(w @ s**2 - (w @ s) ** 2, rel=1e-4)


def test_expansion_examples():
    sa = SmileAsymptotics(0.04, -0.186339)
    assert implied_variance_expansion(sa, 0.0) == 0.04
    assert implied_variance_expansion(sa, 0.01) == pytest.approx(0.03813661)
    assert implied_variance_expansion(sa, -0.01) == pytest.approx(0.04186339)


def test_most_likely_examples(two_asset, ref_model):
    np.testing.assert_allclose(most_likely_configuration(two_asset, 0.1).xstar, [0.0736842, 0.1263158], atol=1e-7)
    assert np.all(most_likely_configuration(two_asset, 0.0).xstar == 0)
    assert most_likely_configuration(ref_model, 0.07).xstar[0] == pytest.approx(0.07)


@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5), st.floats(0.1, 10))
@settings(max_examples=40, deadline=None)
def test_most_likely_formula_and_scale_equivariance(n, seed, xbar, lam):
    m = random_model(n, seed)
    var = index_spot_variance(m)
    big = m.price_corr @ (m.weights * m.sigmas)
    xs = most_likely_configuration(m, xbar).xstar
    np.testing.assert_allclose(xs * var, xbar * m.sigmas * big, atol=1e-14)
    scaled = IndexModel(
        tuple(Component.rough_bergomi(c.weight, lam * c.vol.sigma, c.vol.eta, c.hurst) for c in m.components),
        m.corr,
    )
    assert index_spot_variance(scaled) == pytest.approx(lam**2 * var, rel=1e-12)
    np.testing.assert_allclose(most_likely_configuration(scaled, xbar).xstar, xs, atol=1e-13)


def test_invalid_model_raises():
    comps = tuple(Component.rough_bergomi(0.6, 0.2, -1.0, 0.1) for _ in range(2))
    with pytest.raises(InvalidModelError):
        index_spot_variance(IndexModel(comps, CorrelationMatrix.equicorrelated(2, 0.3)))
