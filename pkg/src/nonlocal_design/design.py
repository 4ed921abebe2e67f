"""Obstacle optimisation: bathtub update, alternating minimisation, brute force.

The soft problem is solved by exact alternating minimisation of
``((1/2) E(u) + sigma sum phi |u|^p m) / |u|_p^p`` over ``(u, phi)``: the
``u``-step is an eigensolve, the ``phi``-step the bathtub rearrangement.
Its fixed points keep their starting support, so the result is then polished
by mass-preserving swaps of cell values.

For the hard problem that scheme is degenerate (the extremal vanishes exactly
on the obstacle, so the bathtub returns the obstacle unchanged). Candidate
sets are therefore produced by continuation in ``sigma`` of the soft scheme,
then improved by exact single-swap descent on the hard quotient, and finally
checked to be a fixed point of the (solve, bathtub) alternation.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .eigensolver import Extremal, SolverOptions, initial_guess, solve_hard, solve_soft
from .errors import BudgetExceededError, ConfigurationError, ParameterError, ShapeError
from .geometry import Grid

log = logging.getLogger(__name__)

# cell counts closer than this to an integer are treated as integral
_COUNT_TOL = 1e-9
# relative gap below which two eigenvalues count as a tie
_TIE_RTOL = 1e-10


@dataclass
class DesignVector:
    """Per-cell potential in [0, 1]; ``binary`` designs are obstacle sets."""

    values: np.ndarray
    cell_measure: float
    binary: bool = False
    pivot: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ParameterError("design values must lie in [0, 1]")
        if self.binary and not np.all((self.values == 0.0) | (self.values == 1.0)):
            raise ParameterError("binary design has fractional values")

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell_measure)

    @property
    def cells(self) -> tuple[int, ...]:
        """Indices of cells with value 1."""
        return tuple(int(i) for i in np.flatnonzero(self.values == 1.0))

    @property
    def mask(self) -> np.ndarray:
        return self.values == 1.0

    @classmethod
    def from_cells(cls, cells, grid: Grid) -> "DesignVector":
        cells = [int(c) for c in cells]
        bad = [c for c in cells if not 0 <= c < grid.size]
        if bad:
            raise ShapeError(f"cell indices {bad} outside 0..{grid.size - 1}")
        values = np.zeros(grid.size)
        values[cells] = 1.0
        return cls(values, grid.cell_measure, binary=True)

    @classmethod
    def from_mask(cls, mask, grid: Grid) -> "DesignVector":
        return cls(np.asarray(mask, dtype=float), grid.cell_measure, binary=True)


@dataclass
class DesignResult:
    lam: float
    extremal: Extremal
    design: DesignVector
    outer_iterations: int
    objective_trace: list[float] = field(default_factory=list)
    converged: bool = True
    cycle_length: int = 0

    @property
    def cycle_detected(self) -> bool:
        return self.cycle_length > 2


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must satisfy 0 < alpha < 1, got {alpha}")


def target_cells(alpha: float, grid: Grid) -> float:
    """The constraint mass ``alpha |Omega|`` in units of cells."""
    k = alpha * grid.size
    if abs(k - round(k)) <= _COUNT_TOL * max(1.0, k):
        return float(round(k))
    return k


def binary_count(alpha: float, grid: Grid) -> int:
    """Number of obstacle cells of a binary design; ``alpha * N`` must be integral."""
    _check_alpha(alpha)
    k = target_cells(alpha, grid)
    if k != int(k):
        n = grid.size
        lo, hi = math.floor(k), math.ceil(k)
        raise ConfigurationError(
            f"binary design needs alpha * N integral, got {alpha} * {n} = {k:.6g}; "
            f"use alpha = {lo / n:.6g} or {hi / n:.6g}, or change N"
        )
    k = int(k)
    if not 0 < k < grid.size:
        raise ConfigurationError(f"alpha * N = {k} leaves no obstacle or no free cell")
    return k


def bathtub_update(u, alpha: float, grid: Grid, mode: str = "relaxed") -> DesignVector:
    """Minimise ``sum phi |u|^p`` over potentials of mass ``alpha |Omega|``.

    Cells are filled in order of increasing ``|u|`` (ties by ascending index).
    In relaxed mode the first cell that would overshoot the mass receives the
    fractional remainder; in binary mode ``alpha * N`` must be integral.
    """
    _check_alpha(alpha)
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ShapeError(f"expected {grid.size} cell values, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ParameterError("bathtub input must be finite")
    if mode not in ("relaxed", "binary"):
        raise ParameterError(f"mode must be 'relaxed' or 'binary', got {mode!r}")

    order = np.lexsort((np.arange(grid.size), np.abs(u)))
    if mode == "binary":
        k = binary_count(alpha, grid)
        n_full, frac = k, 0.0
    else:
        k = target_cells(alpha, grid)
        n_full = int(math.floor(k))
        frac = k - n_full

    values = np.zeros(grid.size)
    values[order[:n_full]] = 1.0
    if frac > 0.0:
        pivot = int(order[n_full])
        values[pivot] = frac
    else:
        pivot = int(order[n_full - 1]) if n_full > 0 else None
    return DesignVector(values, grid.cell_measure, binary=(mode == "binary"), pivot=pivot)


def _same_design(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.max(np.abs(a - b)) <= 1e-12)


def canonical_design(mask: np.ndarray, grid: Grid) -> np.ndarray:
    """Lexicographically smallest image of ``mask`` under the box symmetries.

    Symmetric images have the same eigenvalue, so this applies the
    ascending-index tie rule across equivalent optima.
    """
    best = None
    for perm in grid.symmetry_maps():
        image = mask[perm]
        key = tuple(np.flatnonzero(image))
        if best is None or key < best[0]:
            best = (key, image)
    return best[1]


def alternate_soft(model, grid: Grid, alpha: float, sigma: float, design: DesignVector,
                   opts: SolverOptions, u0=None, max_outer: int = 200) -> DesignResult:
    """Alternate (soft eigensolve, relaxed bathtub) from ``design`` until it repeats."""
    phi = design
    seen = [phi.values]
    trace: list[float] = []
    best: tuple[float, Extremal, DesignVector] | None = None
    cycle_length = 0
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        ext = solve_soft(model, grid, phi, sigma, opts, u0=u0)
        trace.append(ext.lam)
        if best is None or ext.lam < best[0]:
            best = (ext.lam, ext, phi)
        u0 = ext.u
        new = bathtub_update(ext.u, alpha, grid, "relaxed")
        if _same_design(new.values, phi.values):
            converged = True
            break
        for j, old in enumerate(seen):
            if _same_design(new.values, old):
                cycle_length = len(seen) - j
                break
        if cycle_length:
            log.info("soft alternation entered a cycle of length %d", cycle_length)
            break
        seen.append(new.values)
        phi = new
    lam, ext, phi = best
    return DesignResult(lam=lam, extremal=ext, design=phi, outer_iterations=it,
                        objective_trace=trace, converged=converged, cycle_length=cycle_length)


def _sigma_ladder(model, sigma_max: float, lowest: float = 1e-2) -> list[float]:
    scale = model.scale()
    ladder = [scale * 10.0**e for e in range(int(math.log10(lowest)), 4)]
    ladder = [s for s in ladder if s < sigma_max]
    return ladder + [sigma_max]


def _soft_swap_descent(model, grid: Grid, alpha: float, sigma: float, result: DesignResult,
                       opts: SolverOptions, max_outer: int) -> DesignResult:
    """Exchange the values of two cells while that lowers the soft eigenvalue.

    Every alternation fixed point is locally stable (the penalty pushes ``u``
    down wherever ``phi`` is large), so the alternation alone keeps whatever
    support it starts from. Each improving swap restarts the alternation, so
    the result is both a fixed point and swap-optimal.
    """
    trace = list(result.objective_trace)
    while True:
        phi, ext = result.design.values, result.extremal
        weight = np.abs(ext.u) ** model.p
        # release covered cells where u is large, cover cells where u is small
        give = np.flatnonzero(phi > 0.0)
        take = np.flatnonzero(phi < 1.0)
        give = give[np.lexsort((give, -weight[give]))]
        take = take[np.lexsort((take, weight[take]))]
        improved = None
        for i in give:
            for j in take:
                if phi[i] <= phi[j]:
                    continue
                values = phi.copy()
                values[i], values[j] = phi[j], phi[i]
                trial = DesignVector(values, grid.cell_measure)
                cand = solve_soft(model, grid, trial, sigma, opts, u0=ext.u)
                if cand.lam < result.lam * (1.0 - 1e-12):
                    improved = trial
                    break
            if improved is not None:
                break
        if improved is None:
            return DesignResult(lam=result.lam, extremal=result.extremal, design=result.design,
                                outer_iterations=result.outer_iterations, objective_trace=trace,
                                converged=result.converged, cycle_length=result.cycle_length)
        result = alternate_soft(model, grid, alpha, sigma, improved, opts, u0=cand.u, max_outer=max_outer)
        trace.append(result.lam)


def optimize_soft(model, grid: Grid, alpha: float, sigma: float, opts: SolverOptions | None = None,
                  initial: DesignVector | None = None, u0=None, max_outer: int = 200,
                  polish: bool = True) -> DesignResult:
    """Minimise the soft eigenvalue over potentials of mass ``alpha |Omega|``.

    Without ``initial`` the alternation is continued from a small penalty
    (relative to the operator's stiffness) up to ``sigma``, starting from the
    bathtub of the seeded initial guess; only the last stage's trace is kept.
    With ``polish`` the result is then improved by pairwise value swaps.
    """
    opts = opts or SolverOptions()
    _check_alpha(alpha)
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise ParameterError(f"sigma must satisfy sigma > 0, got {sigma}")
    if initial is not None:
        result = alternate_soft(model, grid, alpha, sigma, initial, opts, u0=u0, max_outer=max_outer)
    else:
        guess = initial_guess(grid.size, opts.seed)
        phi = bathtub_update(guess, alpha, grid, "relaxed")
        result = None
        for stage_sigma in _sigma_ladder(model, sigma):
            result = alternate_soft(model, grid, alpha, stage_sigma, phi, opts, u0=u0, max_outer=max_outer)
            phi, u0 = result.design, result.extremal.u
    if polish:
        result = _soft_swap_descent(model, grid, alpha, sigma, result, opts, max_outer)
    return result


def _swap_descent(model, grid: Grid, mask: np.ndarray, opts: SolverOptions, trace: list[float]):
    """First-improvement single-swap descent on the hard eigenvalue.

    Candidate swaps are tried in sensitivity order (release obstacle cells
    with the largest constraint reaction, add free cells with the smallest
    extremal value); the scan is complete before declaring a local minimum.
    """
    ext = solve_hard(model, grid, mask.astype(float), opts)
    trace.append(ext.lam)
    moves = 0
    while True:
        reaction = 0.5 * model.gradient(ext.u)
        inside = np.flatnonzero(mask)
        outside = np.flatnonzero(~mask)
        inside = inside[np.lexsort((inside, reaction[inside]))]
        outside = outside[np.lexsort((outside, ext.u[outside]))]
        improved = False
        for i in inside:
            for j in outside:
                trial = mask.copy()
                trial[i], trial[j] = False, True
                warm = ext.u.copy()
                warm[j] = 0.0
                warm[i] = ext.u[outside].mean()
                cand = solve_hard(model, grid, trial.astype(float), opts, u0=warm)
                if cand.lam < ext.lam * (1.0 - 1e-12):
                    mask, ext = trial, cand
                    trace.append(ext.lam)
                    moves += 1
                    improved = True
                    break
            if improved:
                break
        if not improved:
            return mask, ext, moves


def optimize_hard(model, grid: Grid, alpha: float, opts: SolverOptions | None = None,
                  initial: DesignVector | None = None, max_outer: int = 100) -> DesignResult:
    """Minimise the hard eigenvalue over obstacle sets of ``alpha * N`` cells.

    ``objective_trace`` lists the hard eigenvalue of every accepted design and
    is non-increasing. The returned design is the canonical symmetric image
    (smallest cell indices) of the best set found.
    """
    opts = opts or SolverOptions()
    k = binary_count(alpha, grid)
    if initial is None:
        scale = model.scale()
        seeded = optimize_soft(model, grid, alpha, 1e3 * scale, opts, polish=False)
        mask = bathtub_update(seeded.extremal.u, alpha, grid, "binary").mask
    else:
        mask = np.asarray(getattr(initial, "values", initial), dtype=float) == 1.0
        if int(mask.sum()) != k:
            raise ConfigurationError(f"initial design has {int(mask.sum())} cells, expected {k}")

    trace: list[float] = []
    outer = 0
    converged = False
    cycle_length = 0
    visited: list[tuple[int, ...]] = []
    for outer in range(1, max_outer + 1):
        mask, ext, _ = _swap_descent(model, grid, mask, opts, trace)
        key = tuple(np.flatnonzero(mask))
        # the (solve, bathtub) alternation must reproduce the set
        new_mask = bathtub_update(ext.u, alpha, grid, "binary").mask
        if np.array_equal(new_mask, mask):
            converged = True
            break
        if key in visited:
            cycle_length = len(visited) - visited.index(key)
            break
        visited.append(key)
        mask = new_mask

    mask = canonical_design(mask, grid)
    ext = solve_hard(model, grid, mask.astype(float), opts)
    if ext.lam > min(trace) * (1.0 + 1e-9):
        log.warning("canonical image eigenvalue %.16g differs from best %.16g", ext.lam, min(trace))
    design = DesignVector.from_mask(mask, grid)
    return DesignResult(lam=ext.lam, extremal=ext, design=design, outer_iterations=outer,
                        objective_trace=trace, converged=converged, cycle_length=cycle_length)


def _solve_one(args):
    model, grid, mode, sigma, opts, cells = args
    design = DesignVector.from_cells(cells, grid)
    if mode == "hard":
        return solve_hard(model, grid, design, opts).lam
    return solve_soft(model, grid, design, sigma, opts).lam


def exhaustive_oracle(model, grid: Grid, alpha: float, mode: str = "hard", sigma: float | None = None,
                      opts: SolverOptions | None = None, budget: int = 10**6, threads: int = 1) -> DesignResult:
    """Brute-force minimum over every binary design with ``alpha * N`` cells.

    Ties (relative gap below 1e-10) go to the design whose sorted cell
    indices come first lexicographically.
    """
    opts = opts or SolverOptions()
    if mode not in ("hard", "soft"):
        raise ParameterError(f"mode must be 'hard' or 'soft', got {mode!r}")
    if mode == "soft" and not (sigma is not None and sigma > 0):
        raise ParameterError("soft oracle needs sigma > 0")
    k = binary_count(alpha, grid)
    count = math.comb(grid.size, k)
    if count > budget:
        raise BudgetExceededError(count, budget)

    combos = list(itertools.combinations(range(grid.size), k))
    jobs = ((model, grid, mode, sigma, opts, c) for c in combos)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lams = np.fromiter(pool.map(_solve_one, jobs), dtype=float, count=count)
    else:
        lams = np.fromiter(map(_solve_one, jobs), dtype=float, count=count)

    lam_min = float(lams.min())
    winner = int(np.flatnonzero(lams <= lam_min + _TIE_RTOL * max(1.0, abs(lam_min)))[0])
    design = DesignVector.from_cells(combos[winner], grid)
    if mode == "hard":
        ext = solve_hard(model, grid, design, opts)
    else:
        ext = solve_soft(model, grid, design, sigma, opts)
    return DesignResult(lam=ext.lam, extremal=ext, design=design, outer_iterations=count,
                        objective_trace=[ext.lam])
