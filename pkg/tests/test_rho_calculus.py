import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from conftest import ORACLES
from levikernel.rho_calculus import (DEFAULT_CEILINGS, RhoProfile, beta_function, fit_integral_exponent,
                                     rho, rho_integral, run_lemma21_suite, space_convolution,
                                     spacetime_convolution, verify_rho_integral,
                                     verify_space_convolution, verify_spacetime_convolution)

VALUES = json.loads((ORACLES / "values.json").read_text())


def _quad_line(f, centers=(0.0,)):
    edges = sorted({-np.inf, *(c + o for c in centers for o in (-1.0, 0.0, 1.0)), np.inf})
    return sum(integrate.quad(f, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
               for a, b in zip(edges[:-1], edges[1:]))


def test_rho_at_origin():
    p = RhoProfile(0.0, 1.0, 1.0)
    for t in (1.0, 0.5, 0.01):
        assert float(rho(p, t, 0.0)) == pytest.approx(1 / t, rel=1e-14)


def test_rho_formula_in_two_dimensions():
    p = RhoProfile(0.5, 0.3, 1.2, d=2)
    x = np.array([0.3, -0.4])
    expect = 0.25 ** (0.3 / 1.2) * 0.5 ** 0.5 * (0.25 ** (1 / 1.2) + 0.5) ** (-3.2)
    assert float(p(0.25, x)) == pytest.approx(expect, rel=1e-14)


def test_rho_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        rho(RhoProfile(0.0, 0.0, 1.0), 0.0, 1.0)
    with pytest.raises(ValueError):
        RhoProfile(-0.1, 0.0, 1.0)


def test_integral_closed_form():
    val, tail = rho_integral(RhoProfile(0.0, 0.0, 1.0), 1.0)
    assert val == pytest.approx(2.0, rel=1e-10)
    assert 0 < tail < val


def test_integral_exponent_is_bounded_quarter_beta():
    p = RhoProfile(0.25, 0.0, 1.0)
    ts = 2.0 ** -np.arange(0, 13)
    ratios = [_quad_line(lambda x: float(p(t, x))) / t ** (p.beta - 1) for t in ts]
    # the ratio tends to a constant; it must not drift with t
    assert max(ratios) / min(ratios) < 1.5
    rec = verify_rho_integral(p, ts)
    assert rec.passed
    assert rec.measured_constant == pytest.approx(max(ratios), rel=1e-6)


@pytest.mark.parametrize("beta_frac", [0.0, 0.25, 0.5])
@pytest.mark.parametrize("gamma_frac", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_integral_exponent_slope(alpha, beta_frac, gamma_frac):
    p = RhoProfile(beta_frac * alpha, gamma_frac * alpha, alpha)
    ts = 2.0 ** -np.arange(8, 21)
    slope = fit_integral_exponent(p, ts)
    assert slope == pytest.approx((p.gamma + p.beta - alpha) / alpha, abs=0.02)


def test_beta_function_values():
    assert beta_function(1, 1) == pytest.approx(1.0, rel=1e-12)
    assert beta_function(0.5, 0.5) == pytest.approx(math.pi, rel=1e-12)
    # Gauss-Kronrod with an algebraic weight handles the endpoint powers
    q = integrate.quad(lambda s: 1.0, 0, 1, weight="alg", wvar=(-0.3, -0.7), epsrel=1e-13)[0]
    assert beta_function(0.3, 0.7) == pytest.approx(q, rel=1e-12)
    assert beta_function(0.3, 0.7) == pytest.approx(VALUES["beta_0.3_0.7"], rel=1e-12)
    with pytest.raises(ValueError):
        beta_function(0.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(lam=st.floats(0.01, 1.0), t=st.floats(0.01, 1.0), x=st.floats(-30, 30),
       gamma=st.floats(-1, 2), alpha=st.floats(0.2, 1.9))
def test_scaling_identity_beta_zero(lam, t, x, gamma, alpha):
    p = RhoProfile(0.0, gamma, alpha)
    lhs = float(p(lam ** alpha * t, lam * x))
    assert lhs == pytest.approx(lam ** (gamma - 1 - alpha) * float(p(t, x)), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(1e-3, 1.0), gamma=st.floats(-1, 2), alpha=st.floats(0.2, 1.9),
       th=st.floats(0, 2 * np.pi))
def test_monotone_along_rays(t, gamma, alpha, th):
    r = np.linspace(0, 50, 400)
    p1 = RhoProfile(0.0, gamma, alpha)
    assert np.all(np.diff(p1(t, r)) <= 0)
    p2 = RhoProfile(0.0, gamma, alpha, d=2)
    v = p2(t, r[:, None] * np.array([np.cos(th), np.sin(th)]))
    assert np.all(np.diff(v) <= 0)
    assert np.array_equal(p1(t, r), p1(t, -r))


def test_space_convolution_against_direct_quadrature():
    p = RhoProfile(0.0, 1.0, 1.0)
    ref = _quad_line(lambda z: float(p(0.5, -z)) * float(p(0.5, z)))
    assert space_convolution(p, p, 1.0, 0.5, 0.0) == pytest.approx(ref, rel=1e-9)
    rec = verify_space_convolution(p, p, 1.0, 0.5, xs=[0.0])
    assert rec.passed and rec.measured_constant <= 100


def test_space_convolution_bilinear():
    p1, p2 = RhoProfile(0.25, 0.5, 1.0), RhoProfile(0.0, 0.0, 1.0)
    base = verify_space_convolution(p1, p2, 0.25, 0.05)
    doubled = verify_space_convolution(p1, p2.scaled(2.0), 0.25, 0.05)
    assert doubled.measured_constant == pytest.approx(2 * base.measured_constant, rel=1e-13)


def test_space_convolution_far_field_bounded():
    p1, p2 = RhoProfile(0.25, 0.0, 1.0), RhoProfile(0.25, 0.0, 1.0)
    rho00 = RhoProfile(0.0, 0.0, 1.0)
    ratios = []
    for x in (4.0, 8.0, 16.0):
        lhs = _quad_line(lambda z: float(p1(0.5, x - z)) * float(p2(0.5, z)), (0.0, x))
        assert space_convolution(p1, p2, 1.0, 0.5, x) == pytest.approx(lhs, rel=1e-8)
        ratios.append(lhs / float(rho00(1.0, x)))
    assert max(ratios) < 2 * min(ratios)


def test_space_convolution_preconditions():
    with pytest.raises(ValueError):
        verify_space_convolution(RhoProfile(0.5, 0, 1.0), RhoProfile(0, 0, 1.0), 1.0, 0.5)
    with pytest.raises(ValueError):
        space_convolution(RhoProfile(0, 0, 1.0), RhoProfile(0, 0, 1.0), 1.0, 1.0, 0.0)


def test_spacetime_against_nested_quadrature():
    p = RhoProfile(0.25, 0.0, 1.0)
    val = spacetime_convolution(p, p, 1.0, 0.0)
    assert val == pytest.approx(VALUES["rho"]["spacetime_b0.25_g0_t1_x0"], rel=1e-6)
    rec = verify_spacetime_convolution(p, p, 1.0)
    assert rec.passed and np.isfinite(rec.measured_constant)


def test_spacetime_swap_symmetry():
    p1, p2 = RhoProfile(0.2, 0.4, 1.0), RhoProfile(0.1, 0.6, 1.0)
    for x in (0.0, 0.7, 3.0):
        a = spacetime_convolution(p1, p2, 0.5, x)
        b = spacetime_convolution(p2, p1, 0.5, x)
        assert a == pytest.approx(b, rel=1e-9)


def test_spacetime_time_exponent():
    # at beta=0 and x=0 the substitution s = t u, z = t^(1/a) w is exact, so
    # LHS(t) scales like rho^0_(g1+g2)(t, 0) = t^((g1+g2-d-a)/a)
    p1, p2 = RhoProfile(0.0, 0.5, 1.0), RhoProfile(0.0, 0.75, 1.0)
    ts = np.array([1.0, 0.5, 0.25])
    vals = [spacetime_convolution(p1, p2, t, 0.0) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(vals), 1)[0]
    assert slope == pytest.approx(0.5 + 0.75 - 2.0, abs=1e-6)


def test_spacetime_preconditions():
    with pytest.raises(ValueError):
        verify_spacetime_convolution(RhoProfile(0, 0, 1.0), RhoProfile(0.25, 0, 1.0), 1.0)


def test_records_serialise():
    rec = verify_rho_integral(RhoProfile(0.0, 0.0, 1.0), [1.0, 0.5])
    d = json.loads(rec.dumps())
    assert {"inequality-id", "parameters", "measured_constant", "tolerance", "pass"} <= set(d)
    rec = verify_space_convolution(RhoProfile(0.0, 1.0, 1.0), RhoProfile(0.0, 1.0, 1.0), 1.0, 0.5)
    assert "grid" in rec.details


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_suite_other_alphas(alpha):
    recs = run_lemma21_suite(alpha)
    assert all(r.passed for r in recs)
    for kind, ceiling in DEFAULT_CEILINGS.items():
        worst = max(r.measured_constant for r in recs if r.inequality_id == kind)
        assert worst <= ceiling / 5
