"""Index model: rough Bergomi components, weights and the driver correlation matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

WEIGHT_SUM_TOL = 1e-12


class FactorMode(str, Enum):
    ONE_FACTOR = "one_factor"
    TWO_FACTOR = "two_factor"


class NotPositiveDefinite(ValueError):
    pass


class InvalidModelError(ValueError):
    """Raised when a model fails validation; ``violations`` lists every problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True)
class VolFunction:
    """Rough Bergomi volatility function ``f(v) = sigma * exp(eta * v)``."""

    sigma: float
    eta: float
    family: str = "rough_bergomi"

    def __call__(self, v):
        return self.sigma * np.exp(self.eta * np.asarray(v, dtype=float))

    def derivative(self, v):
        return self.eta * self(v)

    def second_derivative(self, v):
        return self.eta**2 * self(v)

    @property
    def f0(self) -> float:
        return float(self.sigma)

    @property
    def f0_prime(self) -> float:
        return float(self.eta * self.sigma)


@dataclass(frozen=True)
class Component:
    weight: float
    vol: VolFunction
    hurst: float

    @classmethod
    def rough_bergomi(cls, weight, sigma, eta, hurst) -> "Component":
        return cls(float(weight), VolFunction(float(sigma), float(eta)), float(hurst))


class CorrelationMatrix:
    """Symmetric correlation matrix of the Brownian drivers.

    Validation is deferred to :func:`validate`; :meth:`cholesky` raises
    :class:`NotPositiveDefinite` if the factorisation fails.
    """

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"correlation must be a square table, got shape {a.shape}")
        a.setflags(write=False)
        self._a = a

    @classmethod
    def equicorrelated(cls, n: int, rho: float) -> "CorrelationMatrix":
        a = np.full((n, n), float(rho))
        np.fill_diagonal(a, 1.0)
        return cls(a)

    @property
    def n(self) -> int:
        return self._a.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._a

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, CorrelationMatrix) and np.array_equal(self._a, other._a)

    def __hash__(self):
        return hash(self._a.tobytes())

    def __repr__(self):
        return f"CorrelationMatrix({self._a.tolist()!r})"

    @cached_property
    def _factor(self):
        try:
            L = np.linalg.cholesky(self._a)
        except np.linalg.LinAlgError:
            return None
        # singular matrices can slip through with a roundoff-sized pivot
        if np.min(np.diag(L)) <= 1e-8:
            return None
        L.setflags(write=False)
        return L

    def cholesky(self) -> np.ndarray:
        if self._factor is None:
            raise NotPositiveDefinite("correlation not positive definite")
        return self._factor

    def inverse(self) -> np.ndarray:
        L = self.cholesky()
        Linv = solve_triangular(L, np.eye(self.n), lower=True)
        return Linv.T @ Linv


@dataclass(frozen=True)
class IndexModel:
    """Index ``I = sum_i w_i S^i`` with ``S^i_0 = 1``.

    In two-factor mode the correlation matrix is ``2N x 2N``: rows 0..N-1 are
    the price drivers and rows N..2N-1 the matching volatility drivers.
    """

    components: tuple
    corr: CorrelationMatrix
    mode: FactorMode = FactorMode.ONE_FACTOR

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not isinstance(self.corr, CorrelationMatrix):
            object.__setattr__(self, "corr", CorrelationMatrix(self.corr))
        object.__setattr__(self, "mode", FactorMode(self.mode))

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def n_drivers(self) -> int:
        return 2 * self.n if self.mode is FactorMode.TWO_FACTOR else self.n

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([c.vol.f0 for c in self.components])

    @property
    def vol_slopes(self) -> np.ndarray:
        """``f_i'(0)`` per component."""
        return np.array([c.vol.f0_prime for c in self.components])

    @property
    def hursts(self) -> np.ndarray:
        return np.array([c.hurst for c in self.components])

    @property
    def price_corr(self) -> np.ndarray:
        """Correlation block of the price drivers, ``N x N``."""
        return self.corr.entries[: self.n, : self.n]

    def vol_driver(self, i: int) -> int:
        """Index of the driver feeding the volatility of component ``i``."""
        return i + self.n if self.mode is FactorMode.TWO_FACTOR else i


def validate(model: IndexModel) -> list[str]:
    """Return the list of violated model invariants (empty when valid)."""
    out = []
    if model.n == 0:
        return ["model has no components"]
    for i, c in enumerate(model.components):
        if not c.weight > 0:
            out.append(f"component {i}: weight must be positive, got {c.weight}")
        if c.vol.family != "rough_bergomi":
            out.append(f"component {i}: unknown volatility family {c.vol.family!r}")
        if not c.vol.sigma > 0:
            out.append(f"component {i}: sigma must be positive, got {c.vol.sigma}")
        if not np.isfinite(c.vol.eta):
            out.append(f"component {i}: eta must be finite, got {c.vol.eta}")
        if not 0.0 < c.hurst <= 0.5:
            out.append(f"component {i}: hurst must lie in (0, 1/2], got {c.hurst}")
    total = float(np.sum(model.weights))
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        out.append(f"weights sum to {total:.12g}, expected 1")

    a = model.corr.entries
    if model.corr.n != model.n_drivers:
        out.append(
            f"correlation is {model.corr.n}x{model.corr.n} but {model.mode.value} mode "
            f"with {model.n} components needs {model.n_drivers}x{model.n_drivers}"
        )
    if not np.all(np.isfinite(a)):
        out.append("correlation has non-finite entries")
        return out
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        out.append("correlation not symmetric")
    if not np.allclose(np.diag(a), 1.0, rtol=0.0, atol=1e-12):
        out.append("correlation diagonal must be 1")
    if np.any(np.abs(a) > 1.0 + 1e-12):
        out.append("correlation entries must lie in [-1, 1]")
    try:
        model.corr.cholesky()
    except NotPositiveDefinite:
        out.append("correlation not positive definite")
    return out


def require_valid(model: IndexModel, mode: FactorMode | None = None) -> IndexModel:
    problems = validate(model)
    if mode is not None and model.mode is not FactorMode(mode):
        problems.append(f"operation needs {FactorMode(mode).value} mode, model is {model.mode.value}")
    if problems:
        raise InvalidModelError(problems)
    return model


def cholesky(corr: CorrelationMatrix) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == corr``."""
    if not isinstance(corr, CorrelationMatrix):
        corr = CorrelationMatrix(corr)
    return corr.cholesky()


def rho_inverse_quadratic(corr: CorrelationMatrix, u, v) -> float:
    """``u^T rho^{-1} v`` through triangular solves against the Cholesky factor."""
    if not isinstance(corr, CorrelationMatrix):
        corr = CorrelationMatrix(corr)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (corr.n,) or v.shape != (corr.n,):
        raise ValueError(f"vectors must have shape ({corr.n},), got {u.shape} and {v.shape}")
    L = corr.cholesky()
    a = solve_triangular(L, u, lower=True)
    b = solve_triangular(L, v, lower=True)
    return float(a @ b)


# --- JSON model files -------------------------------------------------------

_TOP_KEYS = {"mode", "components", "correlation"}
_COMPONENT_KEYS = {"weight", "sigma", "eta", "hurst"}


def model_from_dict(data: dict) -> IndexModel:
    """Build a model from the JSON schema; unknown or missing keys raise ``ModelFileError``."""
    if not isinstance(data, dict):
        raise ModelFileError("model file must contain a JSON object")
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ModelFileError(f"unknown key {sorted(extra)[0]!r} in model file")
    missing = _TOP_KEYS - set(data)
    if missing:
        raise ModelFileError(f"missing key {sorted(missing)[0]!r} in model file")
    try:
        mode = FactorMode(data["mode"])
    except ValueError:
        raise ModelFileError(f"key 'mode' must be 'one_factor' or 'two_factor', got {data['mode']!r}")
    comps = data["components"]
    if not isinstance(comps, list) or not comps:
        raise ModelFileError("key 'components' must be a non-empty list")
    components = []
    for i, c in enumerate(comps):
        if not isinstance(c, dict):
            raise ModelFileError(f"components[{i}] must be an object")
        extra = set(c) - _COMPONENT_KEYS
        if extra:
            raise ModelFileError(f"unknown key {sorted(extra)[0]!r} in components[{i}]")
        missing = _COMPONENT_KEYS - set(c)
        if missing:
            raise ModelFileError(f"missing key {sorted(missing)[0]!r} in components[{i}]")
        try:
            components.append(Component.rough_bergomi(c["weight"], c["sigma"], c["eta"], c["hurst"]))
        except (TypeError, ValueError):
            raise ModelFileError(f"components[{i}] values must be numbers")
    try:
        corr = CorrelationMatrix(data["correlation"])
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"key 'correlation': {exc}")
    return IndexModel(tuple(components), corr, mode)


def model_to_dict(model: IndexModel) -> dict:
    return {
        "mode": model.mode.value,
        "components": [
            {"weight": c.weight, "sigma": c.vol.sigma, "eta": c.vol.eta, "hurst": c.hurst}
            for c in model.components
        ],
        "correlation": model.corr.entries.tolist(),
    }


def load_model(path) -> IndexModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"malformed JSON in {path}: {exc}")
    return model_from_dict(data)


def save_model(model: IndexModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


# --- reference models -------------------------------------------------------

def single_asset_reference(sigma=0.2, eta=-1.0, hurst=0.1) -> IndexModel:
    """One rough Bergomi asset; the default is the reference used throughout the tests."""
    return IndexModel((Component.rough_bergomi(1.0, sigma, eta, hurst),), CorrelationMatrix([[1.0]]))


def two_asset_example(eta=(0.0, 0.0), hurst=(0.1, 0.2), rho=0.5) -> IndexModel:
    comps = tuple(
        Component.rough_bergomi(0.5, s, e, h) for s, e, h in zip((0.2, 0.3), eta, hurst)
    )
    return IndexModel(comps, CorrelationMatrix.equicorrelated(2, rho))


def three_asset_reference() -> IndexModel:
    comps = tuple(
        Component.rough_bergomi(w, s, e, h)
        for w, s, e, h in zip((0.5, 0.3, 0.2), (0.2, 0.25, 0.3), (-1.0, -1.5, -0.8), (0.1, 0.2, 0.3))
    )
    return IndexModel(comps, CorrelationMatrix.equicorrelated(3, 0.4))


def two_factor_single_asset(sigma=0.2, eta=1.0, hurst=0.1, spot_vol_corr=-0.5) -> IndexModel:
    """One asset whose volatility is driven by a separate Brownian motion."""
    c = float(spot_vol_corr)
    return IndexModel(
        (Component.rough_bergomi(1.0, sigma, eta, hurst),),
        CorrelationMatrix([[1.0, c], [c, 1.0]]),
        FactorMode.TWO_FACTOR,
    )


def to_two_factor(model: IndexModel, spot_vol_corr: float, flip_eta: bool = True) -> IndexModel:
    """Embed a one-factor model into two-factor form.

    The volatility driver of asset i is ``c W^i + sqrt(1 - c^2) Z^i`` with
    independent ``Z``; cross blocks are therefore ``c * rho`` and the vol block
    ``c^2 rho + (1 - c^2) I``. With ``flip_eta`` the sign of every ``eta`` is
    reversed so that ``c -> -1`` reproduces the one-factor dynamics.
    """
    c = float(spot_vol_corr)
    rho = model.price_corr
    n = model.n
    big = np.empty((2 * n, 2 * n))
    big[:n, :n] = rho
    big[:n, n:] = c * rho
    big[n:, :n] = c * rho
    big[n:, n:] = c * c * rho + (1.0 - c * c) * np.eye(n)
    sign = -1.0 if flip_eta else 1.0
    comps = tuple(
        Component(x.weight, VolFunction(x.vol.sigma, sign * x.vol.eta, x.vol.family), x.hurst)
        for x in model.components
    )
    return IndexModel(comps, CorrelationMatrix(big), FactorMode.TWO_FACTOR)
