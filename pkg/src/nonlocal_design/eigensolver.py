"""First eigenpairs of the hard and soft obstacle quotients.

Hard quotient:  (1/2) E(u) / |u|_p^p  over u vanishing on the obstacle cells.
Soft quotient:  ((1/2) E(u) + sigma sum phi |u|^p m) / |u|_p^p.

For p = 2 an exact path solves the (diagonal-mass) symmetric pencil by block
inverse iteration; every p can use :func:`minimize_quotient`, a projected
gradient descent on the L^p unit sphere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import ConstraintError, ConvergenceError, ParameterError, ShapeError
from .geometry import Grid
from .kernel import (
    EnergyBreakdown,
    lp_mass,
    lp_mass_gradient,
    penalty_energy,
    penalty_gradient,
)

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolverOptions:
    tol_lambda: float = 1e-9
    tol_residual: float = 1e-7
    max_iterations: int = 50_000
    seed: int = 0
    p2_mode: str = "exact"

    def __post_init__(self):
        if not (self.tol_lambda > 0 and self.tol_residual > 0):
            raise ParameterError("solver tolerances must be positive")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.p2_mode not in ("exact", "iterative"):
            raise ParameterError(f"p2_mode must be 'exact' or 'iterative', got {self.p2_mode!r}")


@dataclass
class Extremal:
    """A normalised, nonnegative minimiser and its diagnostics."""

    lam: float
    u: np.ndarray = field(repr=False)
    iterations: int
    el_residual: float
    breakdown: EnergyBreakdown
    history: list[float] = field(default_factory=list, repr=False)
    method: str = "exact"

    @property
    def lambda_(self) -> float:
        return self.lam


def initial_guess(n: int, seed: int, free: np.ndarray | None = None) -> np.ndarray:
    """Ones plus seeded uniform noise of amplitude 1e-3; zero off ``free``."""
    rng = np.random.default_rng(seed)
    u = 1.0 + rng.uniform(-1e-3, 1e-3, size=n)
    if free is not None:
        u = np.where(free, u, 0.0)
    return u


def _obstacle_mask(A, grid: Grid) -> np.ndarray:
    values = np.asarray(getattr(A, "values", A), dtype=float)
    if values.shape != (grid.size,):
        raise ShapeError(f"expected {grid.size} design values, got shape {values.shape}")
    if not np.all((values == 0.0) | (values == 1.0)):
        raise ConstraintError("hard obstacle must be binary (values in {0, 1})")
    mask = values == 1.0
    if not mask.any():
        raise ConstraintError("obstacle set is empty; the hard quotient is then zero for constants")
    if mask.all():
        raise ConstraintError("obstacle covers every cell; no admissible nonzero function")
    return mask


def _potential_values(phi, grid: Grid) -> np.ndarray:
    values = np.asarray(getattr(phi, "values", phi), dtype=float)
    if values.shape != (grid.size,):
        raise ShapeError(f"expected {grid.size} potential values, got shape {values.shape}")
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise ParameterError("potential values must lie in [0, 1]")
    return values


def _normalize(u: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    return u / lp_mass(u, grid, p) ** (1.0 / p)


def _sign_fix(u: np.ndarray) -> np.ndarray:
    # extremals have constant sign; pick the nonnegative representative
    if u.sum() < 0:
        u = -u
    return np.abs(u)


def _lowest_eigpair(lap: np.ndarray, start: np.ndarray, tol: float = 1e-13, max_iter: int = 2000):
    """Smallest eigenpair of an SPD matrix by block inverse iteration.

    A block of up to four vectors with Rayleigh-Ritz on each sweep makes the
    rate ``lambda_1 / lambda_5`` instead of ``lambda_1 / lambda_2``.
    Returns ``(theta, x, iterations, relative_residual)``.
    """
    n = lap.shape[0]
    norm = np.abs(lap).sum(axis=1).max()
    try:
        factor = scipy.linalg.cho_factor(lap)
        shift = 0.0
    except np.linalg.LinAlgError:
        shift = 1e-12 * norm
        factor = scipy.linalg.cho_factor(lap + shift * np.eye(n))

    k = min(n, 4)
    rng = np.random.default_rng(12345)
    block = np.empty((n, k))
    block[:, 0] = start
    block[:, 1:] = rng.standard_normal((n, k - 1))
    theta, x, res = np.inf, start, np.inf
    for it in range(1, max_iter + 1):
        y = scipy.linalg.cho_solve(factor, block)
        q, _ = np.linalg.qr(y)
        h = q.T @ lap @ q
        vals, vecs = np.linalg.eigh(0.5 * (h + h.T))
        block = q @ vecs
        theta = float(vals[0])
        x = block[:, 0]
        res = float(np.linalg.norm(lap @ x - theta * x) / norm)
        if res <= tol:
            return theta, x, it, res
    raise ConvergenceError(
        f"inverse iteration stalled at relative residual {res:.3e}", u=x, lam=theta, iterations=max_iter
    )


def minimize_quotient(
    numerator: Callable[[np.ndarray], float],
    numerator_grad: Callable[[np.ndarray], np.ndarray],
    u0: np.ndarray,
    grid: Grid,
    p: float,
    opts: SolverOptions,
    free: np.ndarray | None = None,
):
    """Minimise ``numerator(u) / |u|_p^p`` by projected gradient descent.

    Each step moves along the negative Euclidean gradient of the quotient
    (restricted to ``free`` cells), renormalises to ``|u|_p = 1`` and
    backtracks until the Armijo condition holds. The trial step is the
    Barzilai-Borwein length of the previous step. Stops once the
    quotient change is below ``tol_lambda * max(1, lambda)`` and the sup-norm of
    the Euler-Lagrange residual (the quotient gradient at unit mass) is below
    ``tol_residual``.

    Returns ``(u, lam, iterations, residual, history)``; ``history`` holds the
    accepted quotient values and is non-increasing up to roundoff.
    """
    if p <= 1.0:
        raise ParameterError(f"p must satisfy p > 1, got {p}")
    u = np.asarray(u0, dtype=float).copy()
    if free is None:
        free = np.ones(u.shape, dtype=bool)
    u[~free] = 0.0
    if lp_mass(u, grid, p) <= 0.0:
        raise ParameterError("initial guess vanishes on the free cells")
    u = _normalize(u, grid, p)

    def state(v):
        r = numerator(v)
        g = numerator_grad(v) - r * lp_mass_gradient(v, grid, p)
        g[~free] = 0.0
        return r, g

    lam, g = state(u)
    history = [lam]
    step = 1.0 / max(float(np.linalg.norm(g)), 1.0)
    prev_lam = None
    c_armijo = 1e-4
    for it in range(opts.max_iterations):
        residual = float(np.max(np.abs(g)))
        settled = prev_lam is None or abs(lam - prev_lam) <= opts.tol_lambda * max(1.0, abs(lam))
        if residual <= opts.tol_residual and settled:
            return u, lam, it, residual, history

        gg = float(g @ g)
        # tolerated roundoff in comparing two quotient evaluations
        slack = 64 * _EPS * max(1.0, abs(lam))
        t = step
        while True:
            trial = _normalize(u - t * g, grid, p)
            lam_trial = numerator(trial)
            if lam_trial <= lam - c_armijo * t * gg + slack:
                break
            t *= 0.5
            if t < 1e-30:
                raise ConvergenceError(
                    f"Armijo backtracking failed at residual {residual:.3e}",
                    u=u, lam=lam, iterations=it,
                )
        lam_new, g_new = state(trial)
        assert lam_new <= history[-1] + slack, "quotient increased on an accepted step"
        s_vec = trial - u
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / sy if sy > 0 else 2.0 * t
        prev_lam, lam, u, g = lam, lam_new, trial, g_new
        history.append(lam)

    raise ConvergenceError(
        f"no convergence in {opts.max_iterations} iterations "
        f"(residual {float(np.max(np.abs(g))):.3e})",
        u=u, lam=lam, iterations=opts.max_iterations,
    )


def el_residual_hard(model, u: np.ndarray, lam: float, free: np.ndarray) -> float:
    """Sup-norm on free cells of ``grad(E)/2 - lam * p |u|^(p-2) u * m``."""
    grid, p = model.grid, model.p
    r = 0.5 * model.gradient(u) - lam * lp_mass_gradient(u, grid, p)
    return float(np.max(np.abs(r[free])))


def el_residual_soft(model, u: np.ndarray, lam: float, phi: np.ndarray, sigma: float) -> float:
    grid, p = model.grid, model.p
    r = (
        0.5 * model.gradient(u)
        + penalty_gradient(u, phi, sigma, grid, p)
        - lam * lp_mass_gradient(u, grid, p)
    )
    return float(np.max(np.abs(r)))


def _exact_tolerance(model, opts: SolverOptions, sigma: float = 0.0) -> float:
    # the dense path is checked relative to the operator size; an absolute
    # threshold sits below roundoff once sigma * m or N^(1+sp) is large
    op = float(np.abs(model.laplacian()).sum(axis=1).max()) + sigma * model.grid.cell_measure
    return opts.tol_residual * max(1.0, op)


def _use_exact(model, opts: SolverOptions) -> bool:
    return model.p == 2.0 and opts.p2_mode == "exact"


def solve_hard(model, grid: Grid, A, opts: SolverOptions | None = None, u0=None) -> Extremal:
    """Extremal of the hard quotient with ``u = 0`` on the cells of ``A``.

    The obstacle cells are eliminated from the unknowns, so the returned ``u``
    is exactly zero there.
    """
    opts = opts or SolverOptions()
    mask = _obstacle_mask(A, grid)
    free = ~mask
    p = model.p
    if u0 is None:
        u0 = initial_guess(grid.size, opts.seed, free)

    if _use_exact(model, opts):
        lap = model.laplacian()[np.ix_(free, free)] / grid.cell_measure
        _, x, iterations, _ = _lowest_eigpair(lap, np.asarray(u0, dtype=float)[free])
        u = np.zeros(grid.size)
        u[free] = x
        history: list[float] = []
        method = "exact"
    else:
        u, _, iterations, _, history = minimize_quotient(
            lambda v: 0.5 * model.energy(v),
            lambda v: 0.5 * model.gradient(v),
            u0, grid, p, opts, free=free,
        )
        method = "iterative"

    u = _normalize(_sign_fix(u), grid, p)
    u[mask] = 0.0
    seminorm = 0.5 * model.energy(u)
    breakdown = EnergyBreakdown(seminorm_term=seminorm, penalty_term=0.0, mass=lp_mass(u, grid, p))
    lam = breakdown.rayleigh
    residual = el_residual_hard(model, u, lam, free)
    if method == "exact" and residual > _exact_tolerance(model, opts):
        raise ConvergenceError(f"exact path residual {residual:.3e} above tolerance", u=u, lam=lam)
    return Extremal(lam=lam, u=u, iterations=iterations, el_residual=residual,
                    breakdown=breakdown, history=history, method=method)


def solve_soft(model, grid: Grid, phi, sigma: float, opts: SolverOptions | None = None, u0=None) -> Extremal:
    """Extremal of the soft quotient with potential ``phi`` and penalty ``sigma``."""
    opts = opts or SolverOptions()
    if not (sigma >= 0.0 and math.isfinite(sigma)):
        raise ParameterError(f"sigma must satisfy sigma >= 0, got {sigma}")
    phi = _potential_values(phi, grid)
    p = model.p

    if sigma == 0.0 or not phi.any():
        # constants have zero energy and zero penalty
        u = np.full(grid.size, grid.measure ** (-1.0 / p))
        breakdown = EnergyBreakdown(0.0, 0.0, lp_mass(u, grid, p))
        return Extremal(lam=0.0, u=u, iterations=0, el_residual=0.0,
                        breakdown=breakdown, method="trivial")

    if u0 is None:
        u0 = initial_guess(grid.size, opts.seed)

    if _use_exact(model, opts):
        lap = model.laplacian() / grid.cell_measure
        lap[np.diag_indices_from(lap)] += sigma * phi
        _, u, iterations, _ = _lowest_eigpair(lap, np.asarray(u0, dtype=float))
        history: list[float] = []
        method = "exact"
    else:
        u, _, iterations, _, history = minimize_quotient(
            lambda v: 0.5 * model.energy(v) + penalty_energy(v, phi, sigma, grid, p),
            lambda v: 0.5 * model.gradient(v) + penalty_gradient(v, phi, sigma, grid, p),
            u0, grid, p, opts,
        )
        method = "iterative"

    u = _normalize(_sign_fix(u), grid, p)
    breakdown = EnergyBreakdown(
        seminorm_term=0.5 * model.energy(u),
        penalty_term=penalty_energy(u, phi, sigma, grid, p),
        mass=lp_mass(u, grid, p),
    )
    lam = breakdown.rayleigh
    residual = el_residual_soft(model, u, lam, phi, sigma)
    if method == "exact" and residual > _exact_tolerance(model, opts, sigma):
        raise ConvergenceError(f"exact path residual {residual:.3e} above tolerance", u=u, lam=lam)
    return Extremal(lam=lam, u=u, iterations=iterations, el_residual=residual,
                    breakdown=breakdown, history=history, method=method)
