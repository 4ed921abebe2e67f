import math

import numpy as np
import pytest
from scipy import integrate, special

from nonlocal_design import (
    Domain, ParameterError, assemble_kernel, bbm_pointwise_check, build_grid, compute_K,
    gamma_limit_experiment, optimize_hard, sigma_continuation,
)
from nonlocal_design.limits import in_E_alpha


@pytest.mark.parametrize("n, p, expected", [(1, 2.0, 1.0), (2, 2.0, 0.5)])
def test_K_closed_values(n, p, expected):
    for method in ("gamma", "sphere"):
        assert compute_K(n, p, method) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("p", [2.0, 2.5, 3.0, 3.5])
def test_K_methods_agree(n, p):
    assert abs(compute_K(n, p, "gamma") - compute_K(n, p, "sphere")) <= 1e-10


@pytest.mark.parametrize("p", [1.5, 2.5, 4.0])
def test_K_against_scipy_quadrature(p):
    # n = 2 average of |sin t|^p via adaptive quad, independent of both methods
    val, _ = integrate.quad(lambda t: abs(math.sin(t)) ** p, 0, 2 * math.pi, limit=200)
    assert compute_K(2, p) == pytest.approx(val / (2 * math.pi), rel=1e-10)


def test_K_gamma_high_dimension():
    n, p = 7, 2.0
    ref = special.gamma(n / 2) * special.gamma((p + 1) / 2) / (math.sqrt(math.pi) * special.gamma((n + p) / 2))
    assert compute_K(n, p) == pytest.approx(ref, rel=1e-13)
    # |x_n|^2 averages to 1/n on the sphere
    assert compute_K(n, 2.0) == pytest.approx(1 / n, rel=1e-13)


def test_K_errors():
    with pytest.raises(ParameterError, match="sphere method supports"):
        compute_K(4, 2.0, "sphere")
    with pytest.raises(ParameterError):
        compute_K(0, 2.0)
    with pytest.raises(ParameterError):
        compute_K(2, 1.0)
    with pytest.raises(ParameterError):
        compute_K(2, 2.0, "monte-carlo")


@pytest.fixture(scope="module")
def ladder():
    g = build_grid(Domain.interval(), 12)
    K = assemble_kernel(g, 0.5, 2.0)
    return g, sigma_continuation(K, g, 0.25, [1.0, 10.0, 100.0, 1e3, 1e4, 1e5])


def test_ladder_invariants(ladder):
    g, lad = ladder
    assert lad.is_monotone(1e-7)
    for rec in lad.records:
        assert rec.lam <= lad.hard_lambda + 1e-10
        assert rec.residual_bound_holds(lad.hard_lambda)
        assert rec.design.mass == pytest.approx(0.25, abs=1e-12)
    assert lad.final_set_difference() <= 1


def test_ladder_with_supplied_hard_reference():
    g = build_grid(Domain.interval(), 8)
    K = assemble_kernel(g, 0.3, 2.5)
    hard = optimize_hard(K, g, 0.25)
    lad = sigma_continuation(K, g, 0.25, [5.0, 50.0, 500.0], hard=hard)
    assert lad.hard is hard
    assert all(r.lam <= hard.lam + 1e-8 for r in lad.records)


@pytest.mark.parametrize("bad", [[], [1.0, 1.0], [10.0, 1.0], [-1.0, 2.0]])
def test_ladder_validation(bad):
    g = build_grid(Domain.interval(), 8)
    with pytest.raises(ParameterError):
        sigma_continuation(assemble_kernel(g, 0.5, 2.0), g, 0.25, bad)


def test_bbm_constant_profile():
    g = build_grid(Domain.interval(), 32)
    for row in bbm_pointwise_check("constant", g, 2.0, [0.5, 0.9]):
        assert row.scaled_energy == 0.0 and row.target == 0.0
        assert math.isnan(row.ratio)


def test_bbm_unknown_profile():
    with pytest.raises(ParameterError):
        bbm_pointwise_check("gauss", build_grid(Domain.interval(), 8), 2.0, [0.5])


def test_bbm_linear_profile_corrected_quadrature():
    # for u = x the corrected kernel integrates every off-diagonal cell pair
    # exactly; the two boundary cells only get half of their self-cell term
    g = build_grid(Domain.interval(), 64)
    s, p = 0.5, 2.0
    q = p - 1 - s * p
    row = bbm_pointwise_check("linear", g, p, [s])[0]
    exact = (1 - s) * 2 / ((q + 1) * (q + 2))
    self_cell = 2 * g.h ** (q + 2) / ((q + 1) * (q + 2))
    assert exact - row.scaled_energy == pytest.approx((1 - s) * self_cell, rel=1e-9)


def test_gamma_limit_records_small():
    recs, local = gamma_limit_experiment(Domain.interval(), 16, 2.0, 0.25, [0.6, 0.9])
    g = build_grid(Domain.interval(), 16)
    assert in_E_alpha(local.extremal.u, g, 2.0, 0.25)
    for r in recs:
        assert r.scaled_lambda > 0 and r.local_lambda > 0 and r.K > 0 and r.ratio > 0
        assert in_E_alpha(r.result.extremal.u, g, 2.0, 0.25)
    assert recs[1].ratio > recs[0].ratio


def test_midpoint_quadrature_loses_near_diagonal_mass():
    # with the diagonal dropped, the missing mass scales like h^(p(1-s)),
    # which tends to 1 as s -> 1; this is why the s -> 1 checks use "corrected"
    g = build_grid(Domain.interval(), 512)
    mid = bbm_pointwise_check("cos", g, 2.0, [0.6, 0.99], quadrature="midpoint")
    cor = bbm_pointwise_check("cos", g, 2.0, [0.6, 0.99], quadrature="corrected")
    assert mid[1].ratio < 0.2 < 0.9 < cor[1].ratio
    assert mid[1].ratio < mid[0].ratio
