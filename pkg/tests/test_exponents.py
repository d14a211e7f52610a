import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlslab.errors import InadmissibleExponentError, RegimeError
from nlslab.exponents import (
    ContractionConstants,
    ProblemParams,
    Regime,
    beta_integral,
    compute_exponents,
    contraction_constants,
    critical_power,
    dispersive_exponent,
    duhamel_beta,
    existence_time,
)

from oracles import beta_quadrature


def test_one_dimensional_cubic():
    e = compute_exponents(ProblemParams(1, 1.0))
    assert e.alpha == pytest.approx(5 / 3, abs=1e-15)
    assert e.beta == pytest.approx(4 / 3, abs=1e-15)
    assert e.delta == pytest.approx(2 / 3, abs=1e-15)
    assert e.rho0 == pytest.approx((1 + math.sqrt(17)) / 2, abs=1e-15)
    assert e.regime is Regime.LOCAL


def test_three_dimensional_quadratic():
    e = compute_exponents(ProblemParams(3, 2.0))
    assert e.alpha == pytest.approx(0.25, abs=1e-15)
    assert e.beta == pytest.approx(-1.25, abs=1e-15)
    assert e.alpha - e.beta == pytest.approx(1.5, abs=1e-15)
    assert e.rho0 == pytest.approx(1.0, abs=1e-15)
    assert e.regime is Regime.GLOBAL


def test_boundary_is_inadmissible():
    assert compute_exponents(ProblemParams(2, math.sqrt(2.0))).regime is Regime.INADMISSIBLE
    # upper end n rho / 2 = rho + 2 in n = 3 sits at rho = 4
    assert compute_exponents(ProblemParams(3, 4.0)).regime is Regime.INADMISSIBLE
    assert compute_exponents(ProblemParams(3, 5.0)).regime is Regime.INADMISSIBLE


def test_params_validation():
    with pytest.raises(ValueError):
        ProblemParams(0, 1.0)
    with pytest.raises(ValueError):
        ProblemParams(1, -1.0)
    with pytest.raises(ValueError):
        ProblemParams(1.5, 1.0)
    assert ProblemParams(1, 1.0, 2).lam == 2 + 0j


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 6), rho=st.floats(0.05, 12.0))
def test_exponent_identities(n, rho):
    e = compute_exponents(ProblemParams(n, rho))
    assert e.alpha - e.beta == pytest.approx(n * rho / (rho + 2), rel=1e-13, abs=1e-13)
    assert e.alpha / 2 == pytest.approx(1 / rho - n / (2 * (rho + 2)), rel=1e-12, abs=1e-13)
    assert e.local_weight == pytest.approx((e.alpha - e.beta) / 2, rel=1e-12, abs=1e-13)
    assert e.global_weight == pytest.approx(e.alpha / 2, rel=1e-12, abs=1e-13)
    assert n * e.rho0**2 + (n - 2) * e.rho0 - 4 == pytest.approx(0, abs=1e-12)
    # the dispersive rate at the data index is the local weight
    assert e.dispersive_exponent == pytest.approx(e.local_weight, rel=1e-12)
    if abs(rho - e.rho0) > 1e-9 * e.rho0 and (n <= 2 or abs(rho - 4 / (n - 2)) > 1e-9):
        upper = math.inf if n <= 2 else 4 / (n - 2)
        if rho < e.rho0:
            assert e.regime is Regime.LOCAL
        elif rho < upper:
            assert e.regime is Regime.GLOBAL
        else:
            assert e.regime is Regime.INADMISSIBLE
    if e.regime is Regime.LOCAL:
        assert e.delta > 0


def test_critical_power_closed_form():
    assert critical_power(2) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert critical_power(3) == 1.0
    assert critical_power(1) == pytest.approx((1 + math.sqrt(17)) / 2, abs=1e-15)


def test_dispersive_exponent():
    assert dispersive_exponent(1, 4 / 3) == pytest.approx(0.25)
    assert dispersive_exponent(2, 4 / 3) == pytest.approx(0.5)
    assert dispersive_exponent(3, 2.0) == 0


def test_beta_values():
    assert beta_integral(1, 1) == pytest.approx(1.0, rel=1e-14)
    assert beta_integral(0.5, 0.5) == pytest.approx(math.pi, rel=1e-14)
    assert beta_integral(5 / 6, 2 / 3) == pytest.approx(beta_quadrature(5 / 6, 2 / 3), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.05, 5.0), b=st.floats(0.05, 5.0))
def test_beta_symmetry_and_oracle(a, b):
    assert beta_integral(a, b) == pytest.approx(beta_integral(b, a), rel=1e-13)
    assert beta_integral(a, b) == pytest.approx(beta_quadrature(a, b), rel=1e-8)


@pytest.mark.parametrize("a,b", [(0.0, 1.0), (1.0, -0.5), (-1.0, -1.0)])
def test_beta_divergent(a, b):
    with pytest.raises(InadmissibleExponentError):
        beta_integral(a, b)


def test_duhamel_beta_local_case():
    e = compute_exponents(ProblemParams(1, 1.0))
    # 1 - (alpha-beta)/2 = 5/6, 1 - (alpha-beta)(rho+1)/2 = 2/3
    assert duhamel_beta(e) == pytest.approx(beta_integral(5 / 6, 2 / 3), rel=1e-15)


def test_duhamel_beta_rejects_inadmissible():
    with pytest.raises(RegimeError):
        duhamel_beta(compute_exponents(ProblemParams(2, math.sqrt(2))))


def _unit_constants(exps):
    b = duhamel_beta(exps)
    return ContractionConstants(1.0, b, 1.0, 1.0)


def test_existence_time_closed_form():
    e = compute_exponents(ProblemParams(1, 1.0))
    c = _unit_constants(e)
    # 2^2 * 1 * T^(2/3) * (1/8) = 1  ->  T = 2^(3/2)
    assert existence_time(1 / 8, c, e, theta=1.0) == pytest.approx(2**1.5, rel=1e-14)


def test_existence_time_scaling_and_monotonicity():
    e = compute_exponents(ProblemParams(1, 1.0))
    c = _unit_constants(e)
    t1 = existence_time(0.1, c, e)
    assert existence_time(0.2, c, e) == pytest.approx(t1 * 2 ** (-e.rho / e.delta), rel=1e-13)
    norms = np.geomspace(1e-6, 1.0, 30)
    times = [existence_time(x, c, e) for x in norms]
    assert np.all(np.diff(times) < 0)
    bigger_k = ContractionConstants(1.0, c.beta_integral, 2.0, 1.0)
    assert existence_time(0.1, bigger_k, e) < t1


def test_existence_time_needs_local_regime():
    e = compute_exponents(ProblemParams(1, 3.0))
    c = ContractionConstants(1.0, 1.0, 1.0, 1.0)
    with pytest.raises(RegimeError):
        existence_time(0.1, c, e)


def test_contraction_constants_radius():
    e = compute_exponents(ProblemParams(1, 1.0))
    c = contraction_constants(e, 0.5, 2.0, 1.0, T=8.0)
    assert c.k_combined == pytest.approx(0.5 * 2.0 * duhamel_beta(e))
    assert c.radius_r == pytest.approx(1 / (4 * c.k_combined * 8.0 ** (2 / 3)))
    g = compute_exponents(ProblemParams(1, 3.0))
    cg = contraction_constants(g, 0.5, 2.0, 1.0)
    assert cg.radius_r == pytest.approx((16 * cg.k_combined) ** (-1 / 3))
    assert contraction_constants(g, 0.5, 2.0, 0.0).radius_r == math.inf
    with pytest.raises(ValueError):
        ContractionConstants(-1.0, 1.0, 1.0, 1.0)
