"""Penalty continuation (sigma -> inf) and the s -> 1 experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .design import DesignResult, DesignVector, alternate_soft, optimize_hard
from .eigensolver import SolverOptions
from .errors import ParameterError
from .geometry import Domain, Grid, build_grid
from .kernel import LocalEnergy, assemble_kernel, gagliardo_energy, local_energy, lp_mass

# trapezoid nodes for the periodic angular average at n = 2
_SPHERE_NODES_2D = 2048
# Gauss-Legendre nodes for the height average at n = 3
_SPHERE_NODES_3D = 200


def compute_K(n: int, p: float, method: str = "gamma") -> float:
    """Average of ``|z_n|^p`` over the unit sphere ``S^(n-1)``.

    ``gamma`` evaluates ``Gamma(n/2) Gamma((p+1)/2) / (sqrt(pi) Gamma((n+p)/2))``
    (any n). ``sphere`` averages numerically: the two points of S^0 for
    n = 1; the 2048-point trapezoid rule for ``|sin t|^p`` on a period for n = 2;
    for n = 3 the height ``z_3`` is uniform on [-1, 1], which gives a
    one-dimensional Gauss-Legendre rule. Any coordinate gives the same
    average by rotation invariance, so ``|e_1 . z|^p`` gives the same value.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ParameterError(f"n must be a positive integer, got {n!r}")
    if not (p > 1.0 and math.isfinite(p)):
        raise ParameterError(f"p must satisfy 1 < p < inf, got {p}")
    if method == "gamma":
        try:
            return math.gamma(n / 2) * math.gamma((p + 1) / 2) / (math.sqrt(math.pi) * math.gamma((n + p) / 2))
        except OverflowError:
            return math.exp(
                math.lgamma(n / 2) + math.lgamma((p + 1) / 2)
                - 0.5 * math.log(math.pi) - math.lgamma((n + p) / 2)
            )
    if method != "sphere":
        raise ParameterError(f"method must be 'gamma' or 'sphere', got {method!r}")
    if n == 1:
        return 0.5 * (abs(-1.0) ** p + abs(1.0) ** p)
    if n == 2:
        theta = 2.0 * math.pi * np.arange(_SPHERE_NODES_2D) / _SPHERE_NODES_2D
        return float(np.mean(np.abs(np.sin(theta)) ** p))
    if n == 3:
        x, w = np.polynomial.legendre.leggauss(_SPHERE_NODES_3D)
        t = 0.5 * (x + 1.0)
        return float(0.5 * np.dot(w, t**p))
    raise ParameterError(f"sphere method supports n <= 3, got n={n}; use method='gamma'")


# ---------------------------------------------------------------------------
# sigma continuation


@dataclass
class ContinuationRecord:
    sigma: float
    lam: float
    penalty_residual: float
    design: DesignVector = field(repr=False)
    result: DesignResult = field(repr=False)

    def residual_bound_holds(self, hard_lambda: float) -> bool:
        return self.penalty_residual <= hard_lambda / self.sigma


@dataclass
class ContinuationLadder:
    sigma_values: list[float]
    records: list[ContinuationRecord]
    hard: DesignResult = field(repr=False)

    @property
    def hard_lambda(self) -> float:
        return self.hard.lam

    def is_monotone(self, tol: float = 1e-7) -> bool:
        lams = [r.lam for r in self.records]
        return all(b >= a - tol for a, b in zip(lams, lams[1:]))

    def final_set_difference(self) -> int:
        """Cells where the last design differs from the hard optimal set."""
        last = self.records[-1].design.values
        return int(np.sum(np.abs(last - self.hard.design.values) > 1e-12))


def sigma_continuation(model, grid: Grid, alpha: float, sigma_values: Sequence[float],
                       opts: SolverOptions | None = None, hard: DesignResult | None = None) -> ContinuationLadder:
    """Soft optimum along an increasing penalty ladder.

    Each rung alternates from two starts: the previous rung's (design, u),
    and the hard optimal set with its extremal. The lower eigenvalue wins.
    The hard start keeps every rung below the hard optimum, as the hard
    extremal is soft-admissible with zero penalty. ``hard`` defaults to
    :func:`optimize_hard` on the same grid.
    """
    opts = opts or SolverOptions()
    sigmas = [float(s) for s in sigma_values]
    if not sigmas or any(s <= 0 for s in sigmas):
        raise ParameterError("sigma ladder must be non-empty and positive")
    if any(b <= a for a, b in zip(sigmas, sigmas[1:])):
        raise ParameterError("sigma ladder must be strictly increasing")
    if hard is None:
        hard = optimize_hard(model, grid, alpha, opts)

    records: list[ContinuationRecord] = []
    prev: DesignResult | None = None
    for sigma in sigmas:
        starts = []
        if prev is not None:
            starts.append((prev.design, prev.extremal.u))
        starts.append((hard.design, hard.extremal.u))
        best = None
        for design, u0 in starts:
            res = alternate_soft(model, grid, alpha, sigma, design, opts, u0=u0)
            if best is None or res.lam < best.lam:
                best = res
        u = best.extremal.u
        residual = float(np.sum(np.abs(u) ** model.p * best.design.values) * grid.cell_measure)
        records.append(ContinuationRecord(sigma, best.lam, residual, best.design, best))
        prev = best
    return ContinuationLadder(sigmas, records, hard)


# ---------------------------------------------------------------------------
# s -> 1


PROFILES: dict[str, Callable[[np.ndarray, Domain], np.ndarray]] = {
    "cos": lambda x, d: np.cos(math.pi * (x[:, 0] - d.bounds[0][0]) / d.side_lengths[0]),
    "linear": lambda x, d: x[:, 0],
    "constant": lambda x, d: np.ones(x.shape[0]),
}


@dataclass(frozen=True)
class BBMRow:
    s: float
    scaled_energy: float
    target: float

    @property
    def ratio(self) -> float:
        if self.target == 0.0:
            return math.nan
        return self.scaled_energy / self.target


def bbm_pointwise_check(profile: str, grid: Grid, p: float, s_values: Sequence[float],
                        quadrature: str = "corrected") -> list[BBMRow]:
    """Compare ``(1 - s) [u]^p`` with ``K(n, p) * int |grad u|^p`` for a fixed profile."""
    if profile not in PROFILES:
        raise ParameterError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    u = PROFILES[profile](grid.centers, grid.domain)
    target = compute_K(grid.dim, p) * local_energy(u, grid, p)
    rows = []
    for s in s_values:
        K = assemble_kernel(grid, s, p, quadrature)
        rows.append(BBMRow(float(s), (1.0 - s) * gagliardo_energy(u, K), target))
    return rows


@dataclass
class GammaLimitRecord:
    s: float
    scaled_lambda: float
    local_lambda: float
    K: float
    symmetric_difference: int
    result: DesignResult = field(repr=False)

    @property
    def ratio(self) -> float:
        return self.scaled_lambda / (self.K * self.local_lambda)


def in_E_alpha(u: np.ndarray, grid: Grid, p: float, alpha: float, tol: float = 1e-10) -> bool:
    """``|u|_p = 1`` and the zero set has measure at least ``alpha |Omega|``."""
    zero_measure = np.count_nonzero(u == 0.0) * grid.cell_measure
    return abs(lp_mass(u, grid, p) - 1.0) <= tol and zero_measure >= alpha * grid.measure * (1 - 1e-12)


def gamma_limit_experiment(domain: Domain, cells, p: float, alpha: float, s_values: Sequence[float],
                           opts: SolverOptions | None = None, quadrature: str = "corrected"):
    """Hard optima for each ``s`` against the local problem on the same grid.

    Returns ``(records, local_result)``. ``local_result`` optimises
    ``(1/2) sum |D u / h|^p h^n / |u|_p^p`` over the same obstacle sets.
    """
    opts = opts or SolverOptions()
    grid = build_grid(domain, cells)
    local = optimize_hard(LocalEnergy(grid, p), grid, alpha, opts)
    K = compute_K(grid.dim, p)
    records = []
    for s in s_values:
        model = assemble_kernel(grid, s, p, quadrature)
        res = optimize_hard(model, grid, alpha, opts)
        diff = int(np.count_nonzero(res.design.mask != local.design.mask))
        records.append(GammaLimitRecord(float(s), (1.0 - s) * res.lam, local.lam, K, diff, res))
    return records, local
