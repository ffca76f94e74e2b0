"""Riemann-Liouville kernel, its cell-exact discretization and the lift h -> h_hat.

The kernel is normalised as ``K(t, s) = sqrt(2H) (t - s)^(H - 1/2)`` so that the
Riemann-Liouville process at time 1 has unit variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


def check_hurst(h: float) -> float:
    """Return ``h`` as a float, raising ``ValueError`` unless 0 < h <= 1/2."""
    h = float(h)
    if not (0.0 < h <= 0.5):
        raise ValueError(f"Hurst parameter must lie in (0, 1/2], got {h!r}")
    return h


@dataclass(frozen=True)
class PathGrid:
    """Uniform grid ``t_k = k/m`` on [0, 1]."""

    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"grid needs m >= 1 steps, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def dt(self) -> float:
        return 1.0 / self.m

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m + 1) / self.m

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) / self.m


@dataclass(frozen=True)
class VelocityPath:
    """Piecewise-linear Cameron-Martin path with constant velocity ``v[j]`` on cell j."""

    grid: PathGrid
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (self.grid.m,):
            raise ValueError(f"velocity must have shape ({self.grid.m},), got {v.shape}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @classmethod
    def constant(cls, grid: PathGrid, speed: float = 1.0) -> "VelocityPath":
        return cls(grid, np.full(grid.m, float(speed)))

    def nodes(self) -> np.ndarray:
        """Path values h(t_k), k = 0..m."""
        return np.concatenate(([0.0], np.cumsum(self.v) / self.grid.m))

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.grid.times, self.nodes())

    def __add__(self, other: "VelocityPath") -> "VelocityPath":
        if other.grid != self.grid:
            raise ValueError("paths live on different grids")
        return VelocityPath(self.grid, self.v + other.v)

    def __mul__(self, a: float) -> "VelocityPath":
        return VelocityPath(self.grid, float(a) * self.v)

    __rmul__ = __mul__


def kernel_value(h: float, t, s):
    """``sqrt(2h) (t - s)^(h - 1/2)`` for ``0 <= s < t``."""
    h = check_hurst(h)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s >= t) or np.any(s < 0):
        raise ValueError("kernel needs 0 <= s < t")
    out = np.sqrt(2.0 * h) * (t - s) ** (h - 0.5)
    return float(out) if out.ndim == 0 else out


def kappa(h: float) -> float:
    """Closed form of <K^H 1, 1> = int_0^1 int_0^t K(t, s) ds dt."""
    h = check_hurst(h)
    return float(np.sqrt(2.0 * h) / ((h + 0.5) * (h + 1.5)))


@dataclass(frozen=True)
class KernelWeights:
    """Exact cell integrals of the kernel on a uniform grid.

    ``table[k, j] = int_{t_j}^{t_{j+1}} K(t_k, s) ds`` for ``j < k`` and zero
    otherwise, shape ``(m + 1, m)``. On a uniform grid the entries depend on
    ``k - j`` only; ``profile[d - 1]`` holds the weight for lag ``d``.
    """

    hurst: float
    grid: PathGrid

    def __post_init__(self):
        object.__setattr__(self, "hurst", check_hurst(self.hurst))

    @cached_property
    def profile(self) -> np.ndarray:
        h, m = self.hurst, self.grid.m
        a = h + 0.5
        d = np.arange(1, m + 1, dtype=float)
        out = np.sqrt(2.0 * h) / a * (d**a - (d - 1.0) ** a) * m ** (-a)
        out.setflags(write=False)
        return out

    @cached_property
    def table(self) -> np.ndarray:
        m = self.grid.m
        lag = np.arange(m + 1)[:, None] - np.arange(m)[None, :]
        out = np.where(lag >= 1, self.profile[np.clip(lag, 1, m) - 1], 0.0)
        out.setflags(write=False)
        return out

    def lift(self, v: np.ndarray) -> np.ndarray:
        """Apply the lift to velocities along the last axis; returns node values."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.grid.m:
            raise ValueError(f"last axis must have length {self.grid.m}, got {v.shape[-1]}")
        if v.ndim == 1:
            return np.concatenate(([0.0], np.convolve(v, self.profile)[: self.grid.m]))
        return v @ self.table.T

    @cached_property
    def midpoint_operator(self) -> np.ndarray:
        """(m, m) matrix mapping velocities to h_hat averaged over each cell's end nodes."""
        t = self.table
        out = 0.5 * (t[:-1] + t[1:])
        out.setflags(write=False)
        return out


def lift_path(h: float, p: VelocityPath) -> np.ndarray:
    """Node values ``h_hat(t_k) = int_0^{t_k} K(t_k, s) dh(s)``, k = 0..m."""
    return KernelWeights(h, p.grid).lift(p.v)


def kappa_numeric(h: float, m: int) -> float:
    """Trapezoidal estimate of ``kappa(h)`` from the lift of the unit-speed path."""
    grid = PathGrid(m)
    hat = lift_path(h, VelocityPath.constant(grid))
    return float((hat[1:-1].sum() + 0.5 * hat[-1]) / grid.m)
