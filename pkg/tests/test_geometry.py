import math

import numpy as np
import pytest

from nonlocal_design import ConfigurationError, Domain, build_grid, diameter


def test_interval_four_cells():
    g = build_grid(Domain.interval(0, 1), 4)
    np.testing.assert_allclose(g.centers[:, 0], [0.125, 0.375, 0.625, 0.875], rtol=0, atol=1e-15)
    assert g.cell_measure == 0.25
    assert g.size == 4


def test_square_two_by_two():
    g = build_grid(Domain.rectangle(), 2)
    assert g.centers.shape == (4, 2)
    assert g.cell_measure == 0.25


def test_interval_measure_bookkeeping():
    g = build_grid(Domain.interval(0, 2), 8)
    assert g.h == 0.25
    assert g.cell_measure * g.size == 2.0


@pytest.mark.parametrize("domain, expected", [
    (Domain.interval(0, 1), 1.0),
    (Domain.rectangle(), math.sqrt(2)),
    (Domain.interval(0, 2), 2.0),
])
def test_diameter(domain, expected):
    assert diameter(domain) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 7, 48, 1000])
def test_measure_sum_within_roundoff(n):
    g = build_grid(Domain.interval(-0.3, 1.7), n)
    total = math.fsum([g.cell_measure] * g.size)
    assert abs(total - 2.0) <= 8 * np.spacing(2.0) * g.size


def test_centers_inside_domain():
    g = build_grid(Domain.rectangle((0, 2), (1, 2)), (8, 4))
    assert np.all(g.centers[:, 0] > 0) and np.all(g.centers[:, 0] < 2)
    assert np.all(g.centers[:, 1] > 1) and np.all(g.centers[:, 1] < 2)


def test_square_centers_invariant_under_axis_swap():
    g = build_grid(Domain.rectangle(), 5)
    swapped = {tuple(np.round(c, 14)) for c in g.centers[:, ::-1]}
    assert swapped == {tuple(np.round(c, 14)) for c in g.centers}


def test_non_commensurate_rectangle_names_axis():
    with pytest.raises(ConfigurationError, match="axis 1"):
        build_grid(Domain.rectangle((0, 1), (0, 1)), (4, 5))


@pytest.mark.parametrize("bounds", [((1.0, 0.0),), ((0.0, 0.0),), ((0.0, math.inf),)])
def test_bad_interval(bounds):
    with pytest.raises(ConfigurationError):
        Domain("interval", bounds)


def test_too_few_cells():
    with pytest.raises(ConfigurationError):
        build_grid(Domain.interval(), 1)


def test_symmetry_maps_are_permutations():
    g = build_grid(Domain.rectangle(), 3)
    maps = g.symmetry_maps()
    assert len(maps) == 8
    for m in maps:
        assert sorted(m) == list(range(g.size))
