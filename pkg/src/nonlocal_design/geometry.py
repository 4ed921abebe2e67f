"""Domains and uniform cell-centred grids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

# relative tolerance for deciding that side lengths are commensurate
_SPACING_RTOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """An open interval or axis-aligned rectangle.

    ``bounds`` holds one ``(low, high)`` pair per axis.
    """

    kind: str
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        expected = {"interval": 1, "rectangle": 2}
        if self.kind not in expected:
            raise ConfigurationError(f"unknown domain kind {self.kind!r}; use 'interval' or 'rectangle'")
        if len(bounds) != expected[self.kind]:
            raise ConfigurationError(
                f"{self.kind} needs {expected[self.kind]} (low, high) pair(s), got {len(bounds)}"
            )
        for axis, (lo, hi) in enumerate(bounds):
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise ConfigurationError(f"axis {axis}: need low < high, got ({lo}, {hi})")

    @classmethod
    def interval(cls, low: float = 0.0, high: float = 1.0) -> "Domain":
        return cls("interval", ((low, high),))

    @classmethod
    def rectangle(cls, x: tuple[float, float] = (0.0, 1.0), y: tuple[float, float] = (0.0, 1.0)) -> "Domain":
        return cls("rectangle", (tuple(x), tuple(y)))

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def side_lengths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.bounds)

    @property
    def measure(self) -> float:
        return math.prod(self.side_lengths)


def diameter(domain: Domain) -> float:
    """Euclidean diameter of the closed domain."""
    return math.hypot(*domain.side_lengths)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform cell-centred partition of a :class:`Domain`.

    Cells are numbered in C order over ``cells_per_axis`` (last axis fastest).
    """

    domain: Domain
    cells_per_axis: tuple[int, ...]
    h: float
    centers: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def size(self) -> int:
        return int(self.centers.shape[0])

    @property
    def cell_measure(self) -> float:
        return self.h**self.dim

    @property
    def measure(self) -> float:
        return self.domain.measure

    def index_grid(self) -> np.ndarray:
        """Cell indices arranged in the grid's array shape."""
        return np.arange(self.size).reshape(self.cells_per_axis)

    def symmetry_maps(self) -> list[np.ndarray]:
        """Index permutations induced by the reflections (and, on square grids, transpositions) of the box."""
        idx = self.index_grid()
        maps = []
        if self.dim == 1:
            images = [idx, idx[::-1]]
        else:
            images = [idx, idx[::-1, :], idx[:, ::-1], idx[::-1, ::-1]]
            if self.cells_per_axis[0] == self.cells_per_axis[1]:
                images += [im.T for im in images]
        for im in images:
            maps.append(np.ascontiguousarray(im).ravel())
        return maps


def build_grid(domain: Domain, cells_per_axis: int | Sequence[int]) -> Grid:
    """Build the cell-centred grid with ``cells_per_axis`` cells on each axis.

    All axes must share one spacing ``h``; a rectangle whose sides are not
    commensurate with the requested counts is rejected.
    """
    if isinstance(cells_per_axis, (int, np.integer)):
        counts = (int(cells_per_axis),) * domain.dim
    else:
        counts = tuple(int(c) for c in cells_per_axis)
    if len(counts) != domain.dim:
        raise ConfigurationError(f"expected {domain.dim} cell count(s), got {len(counts)}")
    for axis, c in enumerate(counts):
        if c < 2:
            raise ConfigurationError(f"axis {axis}: need at least 2 cells, got {c}")

    spacings = [length / c for length, c in zip(domain.side_lengths, counts)]
    h = spacings[0]
    for axis, hk in enumerate(spacings[1:], start=1):
        if abs(hk - h) > _SPACING_RTOL * h:
            raise ConfigurationError(
                f"axis {axis}: spacing {hk!r} differs from axis 0 spacing {h!r}; "
                f"choose cell counts proportional to the side lengths {domain.side_lengths}"
            )

    axes = [lo + (np.arange(c) + 0.5) * h for (lo, _), c in zip(domain.bounds, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    return Grid(domain=domain, cells_per_axis=counts, h=h, centers=centers)
