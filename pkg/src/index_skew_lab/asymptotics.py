"""Closed-form small-noise spot variance, skew and most-likely configuration of the index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import kappa
from .model import Component, FactorMode, IndexModel, InvalidModelError, require_valid


@dataclass(frozen=True)
class SmileAsymptotics:
    """First-order smile at the money.

    Attributes
    ----------
    spot_variance : float
        Implied variance at ``x = 0``.
    variance_skew : float
        Slope of implied variance in log-moneyness at ``x = 0``.
    vol_skew : float
        Slope of implied volatility, ``variance_skew / (2 sqrt(spot_variance))``.
    """

    spot_variance: float
    variance_skew: float

    @property
    def vol_skew(self) -> float:
        return self.variance_skew / (2.0 * np.sqrt(self.spot_variance))

    @property
    def spot_vol(self) -> float:
        return float(np.sqrt(self.spot_variance))


@dataclass(frozen=True)
class MostLikelyConfiguration:
    xbar: float
    xstar: np.ndarray


def _kappas(model: IndexModel) -> np.ndarray:
    return np.array([kappa(h) for h in model.hursts])


def index_spot_variance(model: IndexModel) -> float:
    """``sum_ij w_i w_j rho_ij sigma_i sigma_j`` over the price-driver block."""
    require_valid(model)
    ws = model.weights * model.sigmas
    return float(ws @ model.price_corr @ ws)


def _big_sigma(model: IndexModel) -> np.ndarray:
    # Sigma_i = sum_j w_j rho_ij sigma_j
    return model.price_corr @ (model.weights * model.sigmas)


def single_asset_skew(c: Component) -> float:
    """ATM implied-vol skew ``f'(0)/f(0) * kappa(H)`` of a lone component."""
    problems = []
    if not c.vol.sigma > 0:
        problems.append(f"sigma must be positive, got {c.vol.sigma}")
    if not 0.0 < c.hurst <= 0.5:
        problems.append(f"hurst must lie in (0, 1/2], got {c.hurst}")
    if problems:
        raise InvalidModelError(problems)
    return c.vol.f0_prime / c.vol.f0 * kappa(c.hurst)


def index_skew_one_factor(model: IndexModel) -> SmileAsymptotics:
    require_valid(model, FactorMode.ONE_FACTOR)
    w, s = model.weights, model.sigmas
    var = index_spot_variance(model)
    big = _big_sigma(model)
    second = 2.0 * model.vol_slopes * _kappas(model)  # phi_i''(Id, Id)
    skew = -var + float(np.sum(w * big**2 * (second + s**2))) / var
    return SmileAsymptotics(var, skew)


def vol_curvature_matrices(model: IndexModel) -> np.ndarray:
    """Second-derivative matrices ``Phi_i`` (shape ``(N, 2, 2)``) in two-factor mode.

    For ``phi_i(h1, h2) = int f_i(h2_hat) dh1`` only the mixed entry survives
    and equals ``f_i'(0) * kappa(H_i)``.
    """
    off = model.vol_slopes * _kappas(model)
    out = np.zeros((model.n, 2, 2))
    out[:, 0, 1] = off
    out[:, 1, 0] = off
    return out


def index_skew_two_factor(model: IndexModel) -> SmileAsymptotics:
    require_valid(model, FactorMode.TWO_FACTOR)
    n = model.n
    w, s = model.weights, model.sigmas
    rho = model.corr.entries
    var = index_spot_variance(model)
    big = _big_sigma(model)
    phis = vol_curvature_matrices(model)
    ws = w * s
    total = 0.0
    for i in range(n):
        # P[:, l] = (rho[i, l], rho[i + N, l])
        P = np.stack([rho[i, :n], rho[i + n, :n]])
        k = P @ ws  # sum_j w_j sigma_j P_ij
        total += w[i] * (k @ phis[i] @ k + (s[i] * big[i]) ** 2)
    return SmileAsymptotics(var, -var + total / var)


def index_skew(model: IndexModel) -> SmileAsymptotics:
    """Dispatch on the model's factor mode."""
    if model.mode is FactorMode.TWO_FACTOR:
        return index_skew_two_factor(model)
    return index_skew_one_factor(model)


def implied_variance_expansion(sa: SmileAsymptotics, x) -> float:
    """First-order implied variance ``spot_variance + x * variance_skew``; no remainder control."""
    return sa.spot_variance + np.asarray(x, dtype=float) * sa.variance_skew


def most_likely_configuration(model: IndexModel, xbar: float) -> MostLikelyConfiguration:
    """First-order component log-moves ``x_i* = xbar sigma_i Sigma_i / sigma_I^2``."""
    require_valid(model)
    var = index_spot_variance(model)
    xstar = float(xbar) / var * model.sigmas * _big_sigma(model)
    return MostLikelyConfiguration(float(xbar), xstar)
