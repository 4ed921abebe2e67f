"""Discrete Gagliardo energy, its gradient, penalty and mass terms.

Two energy models share one duck-typed interface (``grid``, ``p``,
``energy``, ``gradient``, ``laplacian``, ``scale``) so the eigen- and design
solvers run unchanged on either:

* :class:`KernelMatrix` -- the nonlocal energy ``sum_{i != j} W_ij |u_i - u_j|^p``
  (each unordered pair counted twice, no factor 1/2);
* :class:`LocalEnergy` -- the forward-difference p-Dirichlet energy.

The factor 1/2 of the Rayleigh quotient is applied by the eigensolver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ParameterError, ShapeError
from .geometry import Grid

QUADRATURES = ("midpoint", "corrected")


def sphere_average_gamma(n: int, p: float) -> float:
    # duplicated from limits.compute_K to keep this module import-light
    return math.exp(
        math.lgamma(n / 2) + math.lgamma((p + 1) / 2) - 0.5 * math.log(math.pi) - math.lgamma((n + p) / 2)
    )


def _check_sp(s: float, p: float) -> None:
    if not (0.0 < s < 1.0):
        raise ParameterError(f"s must satisfy 0 < s < 1, got {s}")
    if not (p > 1.0 and math.isfinite(p)):
        raise ParameterError(f"p must satisfy 1 < p < inf, got {p}")


def _as_cells(u, grid: Grid) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ShapeError(f"expected {grid.size} cell values, got shape {u.shape}")
    return u


def _signed_power(d: np.ndarray, e: float) -> np.ndarray:
    """``|d|^e * sign(d)``, exact zero at zero."""
    if e == 1.0:
        return d
    return np.sign(d) * np.abs(d) ** e


def _abs_power(d: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return d * d
    return np.abs(d) ** p


@dataclass(frozen=True)
class EnergyBreakdown:
    """Numerator pieces and denominator of the (penalised) Rayleigh quotient."""

    seminorm_term: float
    penalty_term: float
    mass: float

    @property
    def rayleigh(self) -> float:
        return (self.seminorm_term + self.penalty_term) / self.mass


# ---------------------------------------------------------------------------
# pair integrals for the corrected quadrature
#
# I(k) = int_{C_0} int_{C_k} |x - y|^q dx dy,  q = p - n - s p  (> -n)
# on cells of unit width; rescaled by h^(2n + q).


def _pair_integrals_1d(n_cells: int, q: float) -> np.ndarray:
    k = np.arange(n_cells, dtype=float)

    def g(z):
        # second antiderivative of |z|^q, even in z
        return np.abs(z) ** (q + 2) / ((q + 1) * (q + 2))

    return g(k + 1) - 2 * g(k) + g(k - 1)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_THETA_X, _GL_THETA_W = np.polynomial.legendre.leggauss(48)


def _corner_square_integral(a0: float, a1: float, b0: float, b1: float, q: float) -> float:
    """int_{[0,1]^2} (a0 + a1 x)(b0 + b1 y) |z|^q dz, singular corner at the origin.

    The radial integral is done exactly; the angular one by Gauss-Legendre on
    the two halves of the square, where the integrand is smooth.
    """
    total = 0.0
    for lo, hi in ((0.0, math.pi / 4), (math.pi / 4, math.pi / 2)):
        th = 0.5 * (hi - lo) * _GL_THETA_X + 0.5 * (hi + lo)
        wt = 0.5 * (hi - lo) * _GL_THETA_W
        c, s = np.cos(th), np.sin(th)
        r = 1.0 / np.maximum(c, s)
        m0 = r ** (q + 2) / (q + 2)
        m1 = r ** (q + 3) / (q + 3)
        m2 = r ** (q + 4) / (q + 4)
        f = a0 * b0 * m0 + (a1 * b0 * c + a0 * b1 * s) * m1 + a1 * b1 * c * s * m2
        total += float(np.dot(wt, f))
    return total


def _linear_piece(center: int, lo: int):
    """Tent 1 - |t - center| restricted to [lo, lo + 1] as (c0, c1): c0 + c1 t."""
    if lo < center:  # rising side
        return 1.0 - center, 1.0
    return 1.0 + center, -1.0


@lru_cache(maxsize=32)
def _pair_integrals_2d(nx: int, ny: int, q: float) -> np.ndarray:
    out = np.empty((nx, ny))
    gx = 0.5 * (_GL_X + 1.0)
    gw = 0.5 * _GL_W
    for a in range(nx):
        for b in range(ny):
            total = 0.0
            for lx in (a - 1, a):
                for ly in (b - 1, b):
                    ax0, ax1 = _linear_piece(a, lx)
                    by0, by1 = _linear_piece(b, ly)
                    if lx in (-1, 0) and ly in (-1, 0):
                        # origin is a corner; reflect the subsquare onto [0, 1]^2
                        sx = -1.0 if lx == -1 else 1.0
                        sy = -1.0 if ly == -1 else 1.0
                        total += _corner_square_integral(ax0, sx * ax1, by0, sy * by1, q)
                    else:
                        xs = lx + gx
                        ys = ly + gx
                        X, Y = np.meshgrid(xs, ys, indexing="ij")
                        f = (ax0 + ax1 * X) * (by0 + by1 * Y) * np.hypot(X, Y) ** q
                        total += float(gw @ f @ gw)
            out[a, b] = total
    return out


def _offsets(grid: Grid) -> np.ndarray:
    """Integer offset vectors |i - j| per axis for every cell pair, shape (N, N, n)."""
    idx = np.indices(grid.cells_per_axis).reshape(grid.dim, -1).T
    return np.abs(idx[:, None, :] - idx[None, :, :])


def _midpoint_weights(grid: Grid, s: float, p: float) -> np.ndarray:
    x = grid.centers
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1))
    np.fill_diagonal(dist, 1.0)
    w = grid.cell_measure**2 / dist ** (grid.dim + s * p)
    np.fill_diagonal(w, 0.0)
    return w


def _corrected_weights(grid: Grid, s: float, p: float) -> np.ndarray:
    n, h = grid.dim, grid.h
    q = p - n - s * p
    off = _offsets(grid)
    if n == 1:
        table = _pair_integrals_1d(grid.size, q)
        pair = table[off[..., 0]]
    else:
        table = _pair_integrals_2d(*grid.cells_per_axis, q)
        pair = table[off[..., 0], off[..., 1]]
    pair = pair * h ** (2 * n + q)
    dist_units = np.sqrt((off**2).sum(axis=-1).astype(float))
    np.fill_diagonal(dist_units, 1.0)
    w = pair / (dist_units * h) ** p
    np.fill_diagonal(w, 0.0)
    # sub-cell part of the integral, moved onto the nearest-neighbour links so
    # that affine functions are integrated exactly (exact in 1D and for p = 2)
    self_term = pair[0, 0]
    nearest = (off.sum(axis=-1) == 1)
    w[nearest] += sphere_average_gamma(n, p) * self_term / (2 * h**p)
    return w


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense symmetric weights of the discrete Gagliardo seminorm."""

    s: float
    p: float
    weights: np.ndarray = field(repr=False)
    grid: Grid = field(repr=False)
    quadrature: str = "midpoint"

    def energy(self, u) -> float:
        return gagliardo_energy(u, self)

    def gradient(self, u) -> np.ndarray:
        return gagliardo_gradient(u, self)

    def laplacian(self) -> np.ndarray:
        """``D - W``: for p = 2, half the energy is ``u @ (D - W) @ u``."""
        lap = -self.weights.copy()
        lap[np.diag_indices_from(lap)] = self.weights.sum(axis=1)
        return lap

    def scale(self) -> float:
        """Typical size of the quotient's stiffness (largest row sum per cell measure)."""
        return float(self.weights.sum(axis=1).max() / self.grid.cell_measure)


def assemble_kernel(grid: Grid, s: float, p: float, quadrature: str = "midpoint") -> KernelMatrix:
    """Assemble the cell-pair weights of the kernel ``|x - y|^-(n + s p)``.

    ``midpoint`` uses ``W_ij = h^(2n) / |x_i - x_j|^(n + s p)`` with the
    diagonal excluded. Its relative error grows like ``1 - h^(p(1 - s))`` and
    becomes O(1) as s -> 1. ``corrected`` integrates each cell pair exactly
    for functions that are affine along the pair, and redistributes the
    self-cell integral onto the nearest-neighbour links. Use it when
    ``s`` is close to 1.
    """
    _check_sp(s, p)
    if quadrature not in QUADRATURES:
        raise ParameterError(f"quadrature must be one of {QUADRATURES}, got {quadrature!r}")
    if quadrature == "midpoint":
        w = _midpoint_weights(grid, s, p)
    else:
        w = _corrected_weights(grid, s, p)
    w = 0.5 * (w + w.T)
    w.setflags(write=False)
    return KernelMatrix(s=float(s), p=float(p), weights=w, grid=grid, quadrature=quadrature)


def gagliardo_energy(u, K: KernelMatrix) -> float:
    """``sum_{i != j} W_ij |u_i - u_j|^p``; zero exactly for constants."""
    u = _as_cells(u, K.grid)
    d = u[:, None] - u[None, :]
    return float(np.sum(K.weights * _abs_power(d, K.p)))


def gagliardo_gradient(u, K: KernelMatrix) -> np.ndarray:
    """Exact gradient of :func:`gagliardo_energy`.

    ``g_i = 2 p sum_j W_ij |u_i - u_j|^(p-2) (u_i - u_j)``; the factor 2 comes
    from each pair appearing twice in the energy. For p = 2 this is ``4 (D - W) u``.
    """
    u = _as_cells(u, K.grid)
    d = u[:, None] - u[None, :]
    return 2.0 * K.p * np.sum(K.weights * _signed_power(d, K.p - 1.0), axis=1)


def _design_values(phi, grid: Grid) -> np.ndarray:
    values = getattr(phi, "values", phi)
    return _as_cells(values, grid)


def penalty_energy(u, phi, sigma: float, grid: Grid, p: float) -> float:
    """``sigma * sum_i phi_i |u_i|^p * cell_measure``."""
    if sigma < 0:
        raise ParameterError(f"sigma must satisfy sigma >= 0, got {sigma}")
    u = _as_cells(u, grid)
    phi = _design_values(phi, grid)
    return float(sigma * np.sum(phi * _abs_power(u, p)) * grid.cell_measure)


def penalty_gradient(u, phi, sigma: float, grid: Grid, p: float) -> np.ndarray:
    u = _as_cells(u, grid)
    phi = _design_values(phi, grid)
    return sigma * p * phi * _signed_power(u, p - 1.0) * grid.cell_measure


def lp_mass(u, grid: Grid, p: float) -> float:
    """``sum_i |u_i|^p * cell_measure`` (the p-th power of the L^p norm)."""
    u = _as_cells(u, grid)
    return float(np.sum(_abs_power(u, p)) * grid.cell_measure)


def lp_mass_gradient(u, grid: Grid, p: float) -> np.ndarray:
    u = _as_cells(u, grid)
    return p * _signed_power(u, p - 1.0) * grid.cell_measure


def _axis_differences(u: np.ndarray, grid: Grid) -> list[np.ndarray]:
    arr = u.reshape(grid.cells_per_axis)
    return [np.diff(arr, axis=a) for a in range(grid.dim)]


def _link_multiplicity(grid: Grid, axis: int) -> np.ndarray:
    """How many cells use each link along ``axis``, shaped to broadcast.

    Every cell takes its forward difference; the last cell has none and
    reuses the one-sided interior difference, so the last link counts twice.
    """
    n = grid.cells_per_axis[axis]
    w = np.ones(n - 1)
    w[-1] = 2.0
    shape = [1] * grid.dim
    shape[axis] = n - 1
    return w.reshape(shape)


def local_energy(u, grid: Grid, p: float) -> float:
    """Forward-difference ``sum_axes sum |(u_{i+1} - u_i)/h|^p h^n``, no wraparound.

    The last cell on each axis uses the difference to its lower neighbour.
    """
    if grid.dim not in (1, 2):
        raise ParameterError(f"local energy supports 1D and 2D grids, got dim={grid.dim}")
    u = _as_cells(u, grid)
    h = grid.h
    total = 0.0
    for axis, d in enumerate(_axis_differences(u, grid)):
        total += float(np.sum(_link_multiplicity(grid, axis) * _abs_power(d / h, p)))
    return total * grid.cell_measure


def local_energy_gradient(u, grid: Grid, p: float) -> np.ndarray:
    u = _as_cells(u, grid)
    h = grid.h
    g = np.zeros(grid.cells_per_axis)
    coef = p * h ** (grid.dim - p)
    for axis, d in enumerate(_axis_differences(u, grid)):
        flux = coef * _link_multiplicity(grid, axis) * _signed_power(d, p - 1.0)
        hi = [slice(None)] * grid.dim
        lo = [slice(None)] * grid.dim
        hi[axis] = slice(1, None)
        lo[axis] = slice(None, -1)
        g[tuple(hi)] += flux
        g[tuple(lo)] -= flux
    return g.ravel()


@dataclass(frozen=True, eq=False)
class LocalEnergy:
    """Forward-difference p-Dirichlet energy with the :class:`KernelMatrix` interface."""

    grid: Grid = field(repr=False)
    p: float = 2.0
    quadrature: str = "forward-difference"

    def __post_init__(self):
        if not (self.p > 1.0 and math.isfinite(self.p)):
            raise ParameterError(f"p must satisfy 1 < p < inf, got {self.p}")
        if self.grid.dim not in (1, 2):
            raise ParameterError(f"local energy supports 1D and 2D grids, got dim={self.grid.dim}")

    @property
    def s(self) -> float:
        return 1.0

    def energy(self, u) -> float:
        return local_energy(u, self.grid, self.p)

    def gradient(self, u) -> np.ndarray:
        return local_energy_gradient(u, self.grid, self.p)

    def laplacian(self) -> np.ndarray:
        """For p = 2, half the energy is ``u @ L @ u``."""
        grid = self.grid
        n = grid.size
        idx = grid.index_grid()
        lap = np.zeros((n, n))
        c = 0.5 * grid.h ** (grid.dim - 2)
        for axis in range(grid.dim):
            a = np.take(idx, range(idx.shape[axis] - 1), axis=axis)
            b = np.take(idx, range(1, idx.shape[axis]), axis=axis)
            w = np.broadcast_to(c * _link_multiplicity(grid, axis), a.shape).ravel()
            a, b = a.ravel(), b.ravel()
            np.add.at(lap, (a, a), w)
            np.add.at(lap, (b, b), w)
            np.add.at(lap, (a, b), -w)
            np.add.at(lap, (b, a), -w)
        return lap

    def scale(self) -> float:
        return float(np.diag(self.laplacian()).max() / self.grid.cell_measure)
