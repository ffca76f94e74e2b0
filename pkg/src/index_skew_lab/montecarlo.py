"""Monte Carlo for the small-noise index, implied volatility inversion and the LDP rate check.

Each component follows

    d log S^i = eps f_i(eps W_hat^i) dW^i - 1/2 eps^2 f_i(eps W_hat^i)^2 dt,

with ``W_hat^i`` the Riemann-Liouville lift of the volatility driver, built by
applying the cell-exact kernel weights to the Brownian increments and frozen
at the left end of each step. Paths are produced in fixed-size chunks, each
from its own Philox stream keyed by ``(seed, chunk index)``, so the sample
does not depend on how many threads run the chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize
from scipy.special import logsumexp
from scipy.stats import norm

from .kernel import KernelWeights, PathGrid
from .model import IndexModel, require_valid

THREADS_ENV = "INDEX_SKEW_THREADS"


class NoImpliedVol(ValueError):
    """Price outside the static no-arbitrage band for the given strike and side."""

    def __init__(self, price, lower, upper, edge):
        self.price, self.lower, self.upper, self.edge = price, lower, upper, edge
        super().__init__(
            f"no implied vol: price {price:.6g} outside ({lower:.6g}, {upper:.6g}), {edge} edge"
        )


def default_workers() -> int:
    """Worker count from ``INDEX_SKEW_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {n}")
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class McConfig:
    epsilon: float
    n_steps: int = 256
    n_paths: int = 200_000
    seed: int = 0
    antithetic: bool = True
    chunk_size: int = 8192

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.n_steps < 8:
            raise ValueError(f"n_steps must be >= 8, got {self.n_steps}")
        if self.n_paths < 1000:
            raise ValueError(f"n_paths must be >= 1000, got {self.n_paths}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.chunk_size < 2 or self.chunk_size % 2:
            raise ValueError("chunk_size must be a positive even number")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even number of paths")


@dataclass(frozen=True)
class McSample:
    """Terminal index log-prices ``J_1``; with antithetics, rows 2k and 2k+1 are a pair."""

    values: np.ndarray
    antithetic: bool = False

    def __len__(self):
        return len(self.values)


def _as_sample(sample) -> McSample:
    if isinstance(sample, McSample):
        return sample
    return McSample(np.asarray(sample, dtype=float), False)


def _mean_se(y: np.ndarray, antithetic: bool):
    if len(y) == 0:
        raise ValueError("empty sample")
    if antithetic:
        y = 0.5 * (y[0::2] + y[1::2])
    n = len(y)
    mean = float(np.mean(y))
    se = float(np.std(y, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


# --- simulation ---------------------------------------------------------------

def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


def _simulate_chunk(model, cfg, L, lifts, chunk, n):
    rng = _chunk_rng(cfg.seed, chunk)
    d = model.n_drivers
    steps = cfg.n_steps
    if cfg.antithetic:
        half = rng.standard_normal((n // 2, steps, d))
        Z = np.empty((n, steps, d))
        Z[0::2] = half
        Z[1::2] = -half
    else:
        Z = rng.standard_normal((n, steps, d))
    dt = 1.0 / steps
    dW = (Z @ L.T) * math.sqrt(dt)
    eps = cfg.epsilon
    log_s = np.empty((n, model.n))
    for i, comp in enumerate(model.components):
        q = model.vol_driver(i)
        # left-point values W_hat(t_k), k = 0..steps-1
        w_hat = (dW[:, :, q] * steps) @ lifts[i]
        vol = comp.vol(eps * w_hat)
        dw = dW[:, :, i]
        log_s[:, i] = eps * np.einsum("pk,pk->p", vol, dw) - 0.5 * eps * eps * dt * np.einsum("pk,pk->p", vol, vol)
    return logsumexp(np.log(model.weights) + log_s, axis=1)


def simulate_terminal(model: IndexModel, cfg: McConfig, workers: int | None = None) -> McSample:
    """Sample ``n_paths`` values of ``J_1 = log I_1`` under the small-noise model."""
    require_valid(model)
    L = model.corr.cholesky()
    grid = PathGrid(cfg.n_steps)
    lifts = [np.ascontiguousarray(KernelWeights(c.hurst, grid).table[:-1].T) for c in model.components]
    sizes = [cfg.chunk_size] * (cfg.n_paths // cfg.chunk_size)
    if cfg.n_paths % cfg.chunk_size:
        sizes.append(cfg.n_paths % cfg.chunk_size)

    def run(c):
        return _simulate_chunk(model, cfg, L, lifts, c, sizes[c])

    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(sizes) == 1:
        parts = [run(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    return McSample(np.concatenate(parts), cfg.antithetic)


# --- payoffs --------------------------------------------------------------------

def digital_price(sample, x: float):
    """``P[J_1 > x]`` and its standard error."""
    s = _as_sample(sample)
    return _mean_se((s.values > x).astype(float), s.antithetic)


def _side(x: float, side: str) -> str:
    if side == "auto":
        return "call" if x >= 0 else "put"
    if side not in ("call", "put"):
        raise ValueError(f"side must be 'call', 'put' or 'auto', got {side!r}")
    return side


def vanilla_price(sample, x: float, side: str = "auto"):
    """Undiscounted price of a call/put on ``I_1 = exp(J_1)`` struck at ``exp(x)``.

    ``side='auto'`` picks the out-of-the-money option: calls for ``x >= 0``.
    """
    s = _as_sample(sample)
    side = _side(x, side)
    k = math.exp(x)
    spot = np.exp(s.values)
    payoff = np.maximum(spot - k, 0.0) if side == "call" else np.maximum(k - spot, 0.0)
    return _mean_se(payoff, s.antithetic)


# --- implied volatility ---------------------------------------------------------

VOL_BRACKET = (1e-8, 5.0)


def bs_price(x: float, total_vol, side: str = "call"):
    """Black-Scholes price for unit forward, strike ``exp(x)`` and total volatility."""
    s = np.asarray(total_vol, dtype=float)
    k = math.exp(x)
    d1 = -x / s + 0.5 * s
    d2 = d1 - s
    if _side(x, side) == "call":
        return norm.cdf(d1) - k * norm.cdf(d2)
    return k * norm.cdf(-d2) - norm.cdf(-d1)


def bachelier_price(x: float, normal_vol, side: str = "call"):
    """Normal-model price of ``(J - x)^+`` or ``(x - J)^+`` with ``J ~ N(0, normal_vol^2)``."""
    s = np.asarray(normal_vol, dtype=float)
    z = x / s
    if _side(x, side) == "call":
        return s * norm.pdf(z) - x * norm.cdf(-z)
    return s * norm.pdf(z) + x * norm.cdf(z)


def _invert(pricer, price, lower, upper, tol):
    lo, hi = VOL_BRACKET
    if not (lower < price < upper):
        edge = "lower" if price <= lower else "upper"
        raise NoImpliedVol(price, lower, upper, edge)
    f = lambda s: float(pricer(s)) - price
    flo, fhi = f(lo), f(hi)
    if flo >= 0:
        return lo
    if fhi <= 0:
        raise NoImpliedVol(price, lower, float(pricer(hi)), "upper")
    root = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    # polish in price space; brentq's tolerance is on the volatility
    for _ in range(3):
        err = f(root)
        if abs(err) <= tol:
            break
        h = 1e-7 * max(root, 1e-4)
        slope = (f(root + h) - f(root - h)) / (2 * h)
        if slope <= 0:
            break
        root -= err / slope
    return root


def implied_vol_bs(price: float, x: float, side: str = "auto", tol: float = 1e-12) -> float:
    """Total Black-Scholes implied volatility (unit maturity, unit forward, strike ``exp(x)``)."""
    side = _side(x, side)
    k = math.exp(x)
    if side == "call":
        lower, upper = max(1.0 - k, 0.0), 1.0
    else:
        lower, upper = max(k - 1.0, 0.0), k
    return _invert(lambda s: bs_price(x, s, side), float(price), lower, upper, tol)


def implied_vol_bachelier(price: float, x: float, side: str = "auto", tol: float = 1e-12) -> float:
    """Normal implied volatility of an option on the log-price ``J`` struck at ``x``."""
    side = _side(x, side)
    lower = max(-x, 0.0) if side == "call" else max(x, 0.0)
    return _invert(lambda s: bachelier_price(x, s, side), float(price), lower, math.inf, tol)


def normal_vol_from_digital(p: float, x: float) -> float:
    """Normal volatility matching a digital price, ``P = Phi(-x / sigma)``."""
    q = norm.ppf(p)
    if x == 0 or q == 0 or not np.isfinite(q) or np.sign(q) == np.sign(x):
        raise NoImpliedVol(p, 0.0, 1.0, "lower" if p <= 0.5 else "upper")
    return -x / q


# --- smile ------------------------------------------------------------------------

@dataclass(frozen=True)
class McSmileRow:
    x: float
    digital: float
    digital_se: float
    price: float
    price_se: float
    implied_vol: float
    iv_lo: float
    iv_hi: float
    flag: str


@dataclass(frozen=True)
class McSmile:
    """Per-strike Monte Carlo estimates; implied vols are total vols (epsilon included)."""

    rows: tuple
    epsilon: float

    @property
    def x(self) -> np.ndarray:
        return np.array([r.x for r in self.rows])

    @property
    def implied_vol(self) -> np.ndarray:
        return np.array([r.implied_vol for r in self.rows])

    def implied_variance(self) -> np.ndarray:
        """Small-noise implied variance ``(iv / eps)^2`` per row."""
        return (self.implied_vol / self.epsilon) ** 2

    def implied_variance_band(self):
        lo = np.array([r.iv_lo for r in self.rows]) / self.epsilon
        hi = np.array([r.iv_hi for r in self.rows]) / self.epsilon
        return lo**2, hi**2


def _smile_row(sample: McSample, x: float, z: float = 1.96) -> McSmileRow:
    dig, dig_se = digital_price(sample, x)
    side = _side(x, "auto")
    price, se = vanilla_price(sample, x, side)
    flag = "ok"
    try:
        iv = implied_vol_bs(price, x, side)
    except NoImpliedVol:
        return McSmileRow(x, dig, dig_se, price, se, math.nan, math.nan, math.nan, "no_iv")
    try:
        lo = implied_vol_bs(price - z * se, x, side)
    except NoImpliedVol:
        lo, flag = 0.0, "band_edge"
    try:
        hi = implied_vol_bs(price + z * se, x, side)
    except NoImpliedVol:
        hi, flag = math.inf, "band_edge"
    return McSmileRow(x, dig, dig_se, price, se, iv, lo, hi, flag)


def mc_smile(model: IndexModel, cfg: McConfig, xs, workers: int | None = None) -> McSmile:
    """One simulation, reused across the strikes ``xs`` (sorted ascending)."""
    sample = simulate_terminal(model, cfg, workers)
    rows = tuple(_smile_row(sample, float(x)) for x in sorted(xs))
    return McSmile(rows, cfg.epsilon)


def smile_regression(smile: McSmile, x_max: float | None = None):
    """Least-squares line through implied variance against ``x``; returns (intercept, slope)."""
    x = smile.x
    iv = smile.implied_variance()
    keep = np.isfinite(iv)
    if x_max is not None:
        keep &= np.abs(x) <= x_max + 1e-15
    if keep.sum() < 2:
        raise ValueError("regression needs at least two strikes with a finite implied vol")
    slope, intercept = np.polyfit(x[keep], iv[keep], 1)
    return float(intercept), float(slope)


# --- large deviations rate -------------------------------------------------------

@dataclass(frozen=True)
class RateRow:
    epsilon: float
    p_hat: float
    eps2_log_p: float
    neg_lambda: float
    gap: float
    n_paths: int
    exceedances: int
    flag: str


def tail_probability(sample, x: float):
    """``P[J > x]`` for ``x >= 0`` and ``P[J < x]`` for ``x < 0``, with hit count."""
    s = _as_sample(sample)
    hits = s.values > x if x >= 0 else s.values < x
    p, se = _mean_se(hits.astype(float), s.antithetic)
    return p, se, int(hits.sum())


def rate_check(
    model: IndexModel,
    x: float,
    epsilons,
    cfg_template: McConfig,
    lambda_value: float | None = None,
    grid: int = 128,
    min_exceedances: int = 200,
    max_paths: int = 20_000_000,
    workers: int | None = None,
) -> list[RateRow]:
    """Compare ``eps^2 log P[J > x]`` with ``-Lambda(x)`` along a decreasing ``eps`` ladder.

    When fewer than ``min_exceedances`` paths land beyond ``x`` the path count
    is scaled up (capped at ``max_paths``) and the cell is re-simulated.
    ``lambda_value`` defaults to the energy solver's value on ``grid``.
    """
    if lambda_value is None:
        from .energy import solve_energy

        res = solve_energy(model, x, grid)
        if not res.converged:
            raise RuntimeError(f"energy solver failed at x = {x}: {res.message}")
        lambda_value = res.lambda_value
    rows = []
    for eps in epsilons:
        cfg = replace(cfg_template, epsilon=float(eps))
        while True:
            sample = simulate_terminal(model, cfg, workers)
            p, _, hits = tail_probability(sample, x)
            if hits >= min_exceedances or cfg.n_paths >= max_paths:
                break
            factor = 1.25 * min_exceedances / max(hits, 1)
            n_new = min(max_paths, int(math.ceil(cfg.n_paths * factor / 2.0)) * 2)
            cfg = replace(cfg, n_paths=n_new)
        if hits == 0:
            rows.append(RateRow(eps, 0.0, -math.inf, -lambda_value, math.inf, cfg.n_paths, 0,
                                "rare event, increase paths"))
            continue
        e2 = eps * eps * math.log(p)
        flag = "ok" if hits >= min_exceedances else "few exceedances"
        rows.append(RateRow(eps, p, e2, -lambda_value, abs(e2 + lambda_value), cfg.n_paths, hits, flag))
    return rows
