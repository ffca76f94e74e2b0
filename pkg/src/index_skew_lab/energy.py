"""Energy function ``Lambda(x) = inf { 1/2 <h, rho^-1 h> : phi(h) = x }`` on discretized paths.

Paths are piecewise linear on a uniform grid, i.e. the unknowns are the cell
velocities ``V`` of shape ``(n_drivers, m)``. The component maps are evaluated
with the midpoint rule

    phi_i(V) = sum_k f_i(hat_k) V[i, k] / m,

where ``hat_k`` is the kernel lift of the volatility driver averaged over the
two end nodes of cell k. Everything is smooth in ``V`` and the gradient and
Hessian are available in closed form.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .asymptotics import index_skew, index_spot_variance
from .kernel import KernelWeights, PathGrid, VelocityPath
from .model import Component, IndexModel, require_valid


@dataclass(frozen=True)
class SolverOptions:
    constraint_tol: float = 1e-8
    gradient_tol: float = 1e-6
    max_outer: int = 200
    inner_maxiter: int = 5000
    extra_starts: int = 2
    seed: int = 0
    x_range: float = 1.0
    polish: bool = True
    perturbation: float = 0.3


@dataclass(frozen=True)
class EnergyResult:
    """Minimiser of the discretized energy problem at one target ``x``.

    ``multiplier`` is the Lagrange multiplier of the constraint and equals
    ``Lambda'(x)`` at a regular minimiser. ``foc_residual`` is the L2 norm of
    ``rho^-1 h' - multiplier * Dphi(h)`` in velocity units.
    """

    x: float
    lambda_value: float
    multiplier: float
    paths: tuple
    constraint_residual: float
    foc_residual: float
    multistart_spread: float
    converged: bool
    n_converged: int = 0
    message: str = ""

    @property
    def velocities(self) -> np.ndarray:
        return np.stack([p.v for p in self.paths])


@dataclass(frozen=True)
class ExpansionCoefficients:
    """Derivatives of ``Lambda`` at zero: ``Lambda'' = second``, ``Lambda''' = third``."""

    sigma0_sq: float
    skew_term: float

    @property
    def second(self) -> float:
        return 1.0 / self.sigma0_sq

    @property
    def third(self) -> float:
        return -3.0 * self.skew_term / self.sigma0_sq**3

    def energy(self, x):
        """Third-order Taylor polynomial of ``Lambda``."""
        x = np.asarray(x, dtype=float)
        return 0.5 * self.second * x**2 + self.third * x**3 / 6.0


class DiscreteProblem:
    """Discretized objective and constraint for one model on one grid."""

    def __init__(self, model: IndexModel, grid: PathGrid):
        require_valid(model)
        self.model = model
        self.grid = grid
        self.m = grid.m
        self.d = model.n_drivers
        self.rho_inv = model.corr.inverse()
        self.log_w = np.log(model.weights)
        self.vols = [c.vol for c in model.components]
        self.price_rows = list(range(model.n))
        self.vol_rows = [model.vol_driver(i) for i in range(model.n)]
        self.mid_ops = [KernelWeights(c.hurst, grid).midpoint_operator for c in model.components]

    def _as_array(self, V) -> np.ndarray:
        if not isinstance(V, np.ndarray):
            V = _paths_to_array(V, self.grid)
        V = np.asarray(V, dtype=float).reshape(self.d, self.m)
        return V

    # --- objective -------------------------------------------------------
    def energy(self, V) -> float:
        V = self._as_array(V)
        return float(np.einsum("ik,ij,jk->", V, self.rho_inv, V)) / (2.0 * self.m)

    def energy_grad(self, V) -> np.ndarray:
        return self.rho_inv @ self._as_array(V) / self.m

    # --- constraint ------------------------------------------------------
    def component_values(self, V) -> np.ndarray:
        V = self._as_array(V)
        out = np.empty(self.model.n)
        for i, (p, q) in enumerate(zip(self.price_rows, self.vol_rows)):
            a = self.mid_ops[i] @ V[q]
            out[i] = self.vols[i](a) @ V[p] / self.m
        return out

    def phi(self, V) -> float:
        return float(logsumexp(self.log_w + self.component_values(V)))

    def phi_and_grad(self, V):
        V = self._as_array(V)
        m = self.m
        vals = np.empty(self.model.n)
        grads = np.zeros((self.model.n, self.d, m))
        for i, (p, q) in enumerate(zip(self.price_rows, self.vol_rows)):
            M = self.mid_ops[i]
            a = M @ V[q]
            fa = self.vols[i](a)
            vals[i] = fa @ V[p] / m
            grads[i, p] += fa / m
            grads[i, q] += M.T @ (self.vols[i].derivative(a) * V[p] / m)
        lse = logsumexp(self.log_w + vals)
        probs = np.exp(self.log_w + vals - lse)
        return float(lse), np.tensordot(probs, grads, axes=1), vals, grads, probs

    def phi_hessian(self, V) -> np.ndarray:
        """Hessian of ``phi`` with respect to the flattened velocities."""
        V = self._as_array(V)
        m, d = self.m, self.d
        _, g, _, grads, probs = self.phi_and_grad(V)
        H = np.zeros((d * m, d * m))
        for i, (p, q) in enumerate(zip(self.price_rows, self.vol_rows)):
            M = self.mid_ops[i]
            a = M @ V[q]
            f1 = self.vols[i].derivative(a) / m
            f2 = self.vols[i].second_derivative(a) * V[p] / m
            Hi = np.zeros((d * m, d * m))
            cross = f1[:, None] * M
            Hi[p * m:(p + 1) * m, q * m:(q + 1) * m] += cross
            Hi[q * m:(q + 1) * m, p * m:(p + 1) * m] += cross.T
            Hi[q * m:(q + 1) * m, q * m:(q + 1) * m] += M.T @ (f2[:, None] * M)
            gi = grads[i].ravel()
            H += probs[i] * (Hi + np.outer(gi, gi))
        gf = g.ravel()
        H -= np.outer(gf, gf)
        return H

    # --- first-order direction ----------------------------------------------
    def first_order_velocity(self) -> np.ndarray:
        """Velocities of ``rho phi_0' / sigma_0^2`` (the path for a unit index move)."""
        grad0 = np.zeros(self.d)
        grad0[self.price_rows] = self.model.weights * self.model.sigmas
        direction = self.model.corr.entries @ grad0
        var = float(grad0 @ direction)
        return np.repeat((direction / var)[:, None], self.m, axis=1)


def _paths_to_array(paths, grid: PathGrid | None = None) -> np.ndarray:
    paths = list(paths)
    for p in paths:
        if grid is not None and p.grid != grid:
            raise ValueError("paths live on different grids")
    if len({p.grid for p in paths}) > 1:
        raise ValueError("paths live on different grids")
    return np.stack([p.v for p in paths])


# --- the operations on path objects -----------------------------------------

def phi_component(c: Component, p: VelocityPath, pvol: VelocityPath | None = None) -> float:
    """``int_0^1 f(hat h_vol) dh`` with the lift taken of ``pvol`` (``p`` itself by default)."""
    if pvol is None:
        pvol = p
    if pvol.grid != p.grid:
        raise ValueError("price and volatility paths live on different grids")
    a = KernelWeights(c.hurst, p.grid).midpoint_operator @ pvol.v
    return float(c.vol(a) @ p.v / p.grid.m)


def phi_index(model: IndexModel, h) -> float:
    """``log sum_i w_i exp(phi_i(h))``; ``h`` holds one path per driver."""
    V = _paths_to_array(h)
    return DiscreteProblem(model, PathGrid(V.shape[1])).phi(V)


def energy_objective(model: IndexModel, h) -> float:
    """``1/2 <h', rho^-1 h'>`` in the discrete L2 pairing of velocities."""
    V = _paths_to_array(h)
    return DiscreteProblem(model, PathGrid(V.shape[1])).energy(V)


# --- solver -----------------------------------------------------------------

class _Scaled:
    """Problem in ``z = V / (x sqrt(m))``: objective ``1/2 z rho^-1 z``, constraint ``(phi - x)/x``.

    Objective, constraint and their gradients are O(1) in these units,
    independent of ``x`` and ``m``.
    """

    def __init__(self, prob: DiscreteProblem, x: float):
        self.prob = prob
        self.x = x
        self.scale = x * np.sqrt(prob.m)
        self.shape = (prob.d, prob.m)

    def to_v(self, z):
        return self.scale * np.asarray(z).reshape(self.shape)

    def from_v(self, V):
        return (np.asarray(V) / self.scale).ravel()

    def f(self, z):
        Z = z.reshape(self.shape)
        g = (self.prob.rho_inv @ Z).ravel()
        return 0.5 * float(z @ g), g

    def c(self, z):
        val, grad, *_ = self.prob.phi_and_grad(self.to_v(z))
        return (val - self.x) / self.x, np.sqrt(self.prob.m) * grad.ravel()

    def c_hess(self, z):
        return self.x * self.prob.m * self.prob.phi_hessian(self.to_v(z))


def _brent_scale(prob: DiscreteProblem, V0: np.ndarray, x: float) -> np.ndarray:
    """Rescale ``V0`` along its ray so that ``phi`` hits ``x`` when a bracket exists."""
    g = lambda s: prob.phi(s * V0) - x
    lo = 0.0
    s = 1.0
    glo = g(lo)
    for _ in range(40):
        gs = g(s)
        if np.sign(gs) != np.sign(glo) and np.isfinite(gs):
            return optimize.brentq(g, lo, s, xtol=1e-14, rtol=1e-14) * V0
        lo, glo = s, gs
        s *= 1.5
        if s > 20.0:
            break
    return V0


def _kkt_residuals(sp: _Scaled, z, mu):
    cval, cg = sp.c(z)
    _, fg = sp.f(z)
    return cval, fg - mu * cg


def _alm(sp: _Scaled, z0: np.ndarray, mu0: float, opts: SolverOptions):
    """Augmented Lagrangian outer loop with L-BFGS inner solves."""
    z = z0.copy()
    mu = mu0
    r = 10.0 * max(abs(mu0), 1.0)
    ctol = opts.constraint_tol / abs(sp.x)
    gtol = opts.gradient_tol / abs(sp.x)
    last_c = np.inf
    stalled = 0
    for outer in range(opts.max_outer):

        def aug(zz):
            fv, fg = sp.f(zz)
            cv, cg = sp.c(zz)
            return fv - mu * cv + 0.5 * r * cv * cv, fg + (r * cv - mu) * cg

        res = optimize.minimize(
            aug, z, jac=True, method="L-BFGS-B",
            options={"maxiter": opts.inner_maxiter, "gtol": 1e-11, "ftol": 1e-15, "maxcor": 30},
        )
        if not np.all(np.isfinite(res.x)):
            break
        z = res.x
        cval, _ = sp.c(z)
        mu = mu - r * cval
        _, lag = _kkt_residuals(sp, z, mu)
        if abs(cval) <= 0.1 * ctol and np.linalg.norm(lag) <= 0.1 * gtol:
            break
        if abs(cval) > 0.25 * last_c:
            # an unreachable target shows up as a residual that no penalty can shrink
            if r >= 1e12:
                stalled += 1
                if stalled >= 3:
                    break
            r = min(10.0 * r, 1e12)
        else:
            stalled = 0
        last_c = abs(cval)
    return z, mu, outer + 1


def _newton_polish(sp: _Scaled, z, mu, steps: int = 8):
    """Newton iterations on the KKT system ``(rho^-1 z - mu Dc, c) = 0``."""
    n = z.size
    best = (z, mu)
    cval, lag = _kkt_residuals(sp, z, mu)
    best_res = max(abs(cval), np.linalg.norm(lag))
    A0 = np.kron(sp.prob.rho_inv, np.eye(sp.prob.m))
    for _ in range(steps):
        _, cg = sp.c(z)
        K = np.zeros((n + 1, n + 1))
        K[:n, :n] = A0 - mu * sp.c_hess(z)
        K[:n, n] = -cg
        K[n, :n] = cg
        rhs = -np.concatenate([lag, [cval]])
        try:
            step = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            break
        z_new, mu_new = z + step[:n], mu + step[n]
        c_new, lag_new = _kkt_residuals(sp, z_new, mu_new)
        res_new = max(abs(c_new), np.linalg.norm(lag_new))
        if not np.isfinite(res_new) or res_new >= best_res:
            break
        z, mu, cval, lag = z_new, mu_new, c_new, lag_new
        best, best_res = (z, mu), res_new
        if res_new < 1e-14:
            break
    return best


def _run_start(sp: _Scaled, z0, mu0, opts: SolverOptions):
    x = sp.x
    z, mu, n_outer = _alm(sp, z0, mu0, opts)
    if opts.polish:
        z, mu = _newton_polish(sp, z, mu)
    cval, lag = _kkt_residuals(sp, z, mu)
    c_abs = abs(cval * x)
    foc = abs(x) * float(np.linalg.norm(lag))
    ok = bool(np.isfinite(c_abs) and c_abs <= opts.constraint_tol and foc <= opts.gradient_tol)
    energy = x * x * sp.f(z)[0]
    return ok, energy, z, mu, c_abs, foc, n_outer


def solve_energy(
    model: IndexModel,
    x: float,
    grid: PathGrid | int = 128,
    opts: SolverOptions | None = None,
) -> EnergyResult:
    """Minimise the discretized energy subject to ``phi(h) = x``.

    Starts from the first-order path ``x rho phi_0' / sigma_0^2`` rescaled onto
    the constraint, plus ``opts.extra_starts`` random perturbations of it, and
    keeps the lowest converged energy. ``multistart_spread`` is the range of
    energies over the converged starts; non-uniqueness shows up there.
    """
    opts = opts or SolverOptions()
    grid = grid if isinstance(grid, PathGrid) else PathGrid(grid)
    prob = DiscreteProblem(model, grid)
    x = float(x)
    if x == 0.0:
        zero = tuple(VelocityPath(grid, np.zeros(grid.m)) for _ in range(prob.d))
        return EnergyResult(0.0, 0.0, 0.0, zero, 0.0, 0.0, 0.0, True, 1, "x = 0")
    if abs(x) > opts.x_range:
        warnings.warn(
            f"|x| = {abs(x):g} exceeds the configured range {opts.x_range:g}; "
            "the minimiser may need more starts",
            stacklevel=2,
        )

    sp = _Scaled(prob, x)
    V_lin = x * prob.first_order_velocity()
    with np.errstate(over="ignore", invalid="ignore"):
        V_first = _brent_scale(prob, V_lin, x)
    z_first = sp.from_v(V_first)
    starts = [z_first]
    rng = np.random.default_rng(np.random.SeedSequence([int(opts.seed), grid.m]))
    rms = np.sqrt(np.mean(z_first**2))
    for _ in range(opts.extra_starts):
        starts.append(z_first + opts.perturbation * rms * rng.standard_normal(z_first.size))

    mu0 = 1.0 / index_spot_variance(model)
    with np.errstate(over="ignore", invalid="ignore"):
        candidates = [_run_start(sp, z0, mu0, opts) for z0 in starts]

    good = [c for c in candidates if c[0]]
    pool = good if good else candidates
    ok, energy, z, mu, c_abs, foc, n_outer = min(pool, key=lambda c: c[1] if np.isfinite(c[1]) else np.inf)
    spread = (max(c[1] for c in good) - min(c[1] for c in good)) if good else float("nan")
    V = sp.to_v(z)
    paths = tuple(VelocityPath(grid, row) for row in V)
    msg = "converged" if ok else f"not converged: residual {c_abs:.3g}, first-order residual {foc:.3g}"
    return EnergyResult(x, float(energy), float(mu * x), paths, float(c_abs), float(foc),
                        float(spread), ok, len(good), msg)


def component_log_moves(model: IndexModel, result: EnergyResult) -> np.ndarray:
    """Terminal component log-moves ``phi_i(h^x)`` along the minimiser."""
    prob = DiscreteProblem(model, result.paths[0].grid)
    return prob.component_values(result.velocities)


def first_order_residual(model: IndexModel, result: EnergyResult) -> np.ndarray:
    """``rho^-1 h' - multiplier * m * grad phi`` per driver and cell (velocity units)."""
    V = result.velocities
    prob = DiscreteProblem(model, result.paths[0].grid)
    _, g, *_ = prob.phi_and_grad(V)
    return prob.rho_inv @ V - result.multiplier * prob.m * g


def expansion_coefficients(model: IndexModel) -> ExpansionCoefficients:
    sa = index_skew(model)
    return ExpansionCoefficients(sa.spot_variance, sa.variance_skew * sa.spot_variance)


def _map_rows(fn, items, workers: int | None):
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(i, it) for i, it in enumerate(items)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(items)), items))


def energy_curve(model, xs, grid=128, opts=None, workers=None) -> list[EnergyResult]:
    """``solve_energy`` over ``xs`` in ascending order; rows may run concurrently."""
    opts = opts or SolverOptions()
    xs = sorted(float(x) for x in xs)
    return _map_rows(lambda i, x: solve_energy(model, x, grid, opts), xs, workers)


@dataclass(frozen=True)
class SmileRow:
    x: float
    lambda_value: float
    multiplier: float
    implied_variance: float
    converged: bool
    multistart_spread: float


def smile_from_energy(model, xs, grid=128, opts=None, workers=None) -> list[SmileRow]:
    """Small-noise implied variance ``x^2 / (2 Lambda(x))``; ``x = 0`` maps to the spot variance."""
    var0 = index_spot_variance(model)
    rows = []
    for r in energy_curve(model, xs, grid, opts, workers):
        if r.x == 0.0:
            iv = var0
        elif r.lambda_value > 0:
            iv = r.x * r.x / (2.0 * r.lambda_value)
        else:
            iv = float("nan")
        rows.append(SmileRow(r.x, r.lambda_value, r.multiplier, iv, r.converged, r.multistart_spread))
    return rows
