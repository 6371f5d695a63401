import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from levikernel.jump_kernel import (SingularMatrixError, MatrixField, constant_kernel,
                                    constant_matrix_field, diagonal_matrix_field,
                                    expression_kernel, kappa_from_matrix, kernel_from_config,
                                    normalising_constant, odd_perturbation_kernel,
                                    reference_kernel, separable_kernel, stable_symbol_constant,
                                    tanh_matrix_field, validate_kernel, validate_matrix_field)


def test_constant_kernel_has_no_violations():
    rep = validate_kernel(constant_kernel(1.0), sample_count=500)
    assert rep.ok
    assert rep.symmetry_defect == 0.0
    assert rep.kappa_min == rep.kappa_max == 1.0


def test_reference_bounds_match_a_fine_scan():
    k = reference_kernel()
    xs = np.linspace(-2 * np.pi, 2 * np.pi, 2001)
    zs = np.linspace(-np.pi, np.pi, 2001)
    vals = k.evaluate(xs[:, None], zs[None, :])
    # brute-force extrema of the formula
    assert vals.min() == pytest.approx(0.6, abs=1e-5)
    assert vals.max() == pytest.approx(1.4, abs=1e-5)
    assert (k.kappa0, k.kappa1) == pytest.approx((0.6, 1.4))
    assert validate_kernel(k, sample_count=3000).ok


def test_odd_perturbation_reports_symmetry_violation():
    rep = validate_kernel(odd_perturbation_kernel(), sample_count=200)
    assert not rep.ok
    assert rep.symmetry_defect == pytest.approx(1.0)
    assert any(v.startswith("symmetry") for v in rep.violations)


def test_understated_bounds_are_flagged():
    k = expression_kernel("1 + 0.4*sin(x)", 1.0, 0.5, 0.8, 1.2, 1.0)
    msgs = validate_kernel(k, sample_count=1000).violations
    assert any("lower bound" in m for m in msgs)
    assert any("upper bound" in m for m in msgs)


def test_validate_kernel_rejects_empty_sample():
    with pytest.raises(ValueError):
        validate_kernel(constant_kernel(), sample_count=0)


@pytest.mark.parametrize("alpha", [0.0, 2.0, -1.0, 2.5])
def test_alpha_range(alpha):
    with pytest.raises(ValueError, match="alpha out of"):
        constant_kernel(1.0, alpha)


def _inverse_constant_1d(alpha):
    # int (1 - cos z) |z|^(-1-alpha) dz split at 1, oscillatory tail by QAWF
    tail = lambda r: 2 * r ** (-1 - alpha)
    return (integrate.quad(lambda r: 2 * (1 - math.cos(r)) * r ** (-1 - alpha), 0, 1)[0]
            + integrate.quad(tail, 1, np.inf)[0]
            - integrate.quad(tail, 1, np.inf, weight="cos", wvar=1)[0])


@pytest.mark.parametrize("d,alpha", [(1, 0.5), (1, 1.0), (1, 1.5), (2, 0.7), (2, 1.3)])
def test_normalising_constant_against_quadrature(d, alpha):
    inv = _inverse_constant_1d(alpha)
    if d == 2:
        # integrating out z_2 leaves |z_1|^(-1-alpha) times this factor
        inv *= integrate.quad(lambda u: (1 + u * u) ** (-(2 + alpha) / 2), -np.inf, np.inf)[0]
    assert normalising_constant(d, alpha) == pytest.approx(1 / inv, rel=1e-8)


def test_stable_symbol_constant_cauchy():
    assert stable_symbol_constant(1.0) == pytest.approx(math.pi)


def test_identity_matrix_gives_constant():
    k = kappa_from_matrix(constant_matrix_field(1.0), 1.3)
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(k.evaluate(x, 0.3 * x + 1), normalising_constant(1, 1.3))
    k2 = kappa_from_matrix(constant_matrix_field(np.eye(2), d=2), 0.8)
    z = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_allclose(k2.evaluate(np.zeros((20, 2)), z), normalising_constant(2, 0.8))


@pytest.mark.parametrize("a,alpha", [(0.5, 1.0), (2.0, 1.0), (3.0, 0.6), (1.7, 1.8)])
def test_scalar_matrix_gives_power(a, alpha):
    k = kappa_from_matrix(constant_matrix_field(a), alpha)
    assert float(k.evaluate(0.2, -4.0)) == pytest.approx(normalising_constant(1, alpha) * a ** alpha)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_diagonal_matrix_hand_value(alpha):
    k = kappa_from_matrix(diagonal_matrix_field([1.0, 2.0]), alpha)
    # A^-1 (1,0) = (1,0) and det A = 2
    val = float(k.evaluate(np.zeros(2), np.array([1.0, 0.0])))
    assert val == pytest.approx(normalising_constant(2, alpha) / 2, rel=1e-14)
    # along (0,1): |z| / |A^-1 z| = 2
    val = float(k.evaluate(np.zeros(2), np.array([0.0, 1.0])))
    assert val == pytest.approx(normalising_constant(2, alpha) / 2 * 2 ** (2 + alpha), rel=1e-14)


def test_singular_matrix_raises():
    A = MatrixField(1, lambda x: np.tanh(x), 0.1, 1.0, 1.0, 0.5, "tanh")
    k = kappa_from_matrix(A, 1.0)
    with pytest.raises(SingularMatrixError):
        k.evaluate(np.array([0.0, 1.0]), 1.0)
    A2 = MatrixField(2, lambda x: np.broadcast_to(np.array([[1.0, 1.0], [1.0, 1.0]]),
                                                  x.shape[:-1] + (2, 2)).copy(), 0.1, 2.0)
    with pytest.raises(SingularMatrixError):
        kappa_from_matrix(A2, 1.0).evaluate(np.zeros(2), np.ones(2))


def test_tanh_matrix_field_validates():
    assert validate_matrix_field(tanh_matrix_field(0.3))["violations"] == []
    assert validate_matrix_field(tanh_matrix_field(0.3, d=2))["violations"] == []
    assert validate_kernel(kappa_from_matrix(tanh_matrix_field(0.3), 1.0)).ok


def _rotation_field(alpha_lo, alpha_hi):
    # A(x) = R(x1) diag(1 + 0.3 tanh x1, 1.5) R(x1)^T; singular values in [0.7, 1.5]
    def fn(x):
        th = np.tanh(x[..., 0])
        c, s = np.cos(th), np.sin(th)
        R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        D = np.zeros(x.shape[:-1] + (2, 2))
        D[..., 0, 0] = 1 + 0.3 * th
        D[..., 1, 1] = 1.5
        return R @ D @ np.swapaxes(R, -1, -2)
    return MatrixField(2, fn, alpha_lo, alpha_hi, 2.0, 0.5, "rotating")


@settings(max_examples=40, deadline=None)
@given(x1=st.floats(-20, 20), x2=st.floats(-20, 20), r=st.floats(1e-3, 1e3),
       th=st.floats(0, 2 * np.pi), alpha=st.floats(0.1, 1.9))
def test_matrix_kernel_symmetric_and_enveloped(x1, x2, r, th, alpha):
    A = _rotation_field(0.7, 1.5)
    k = kappa_from_matrix(A, alpha)
    x = np.array([x1, x2])
    z = r * np.array([np.cos(th), np.sin(th)])
    v, vm = float(k.evaluate(x, z)), float(k.evaluate(x, -z))
    assert v == vm
    assert k.kappa0 * (1 - 1e-12) <= v <= k.kappa1 * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-50, 50), z=st.floats(1e-4, 1e4), alpha=st.floats(0.1, 1.9),
       amp=st.floats(0.0, 0.9))
def test_scalar_matrix_kernel_symmetric_and_enveloped(x, z, alpha, amp):
    k = kappa_from_matrix(tanh_matrix_field(amp), alpha)
    v = float(k.evaluate(x, z))
    assert v == float(k.evaluate(x, -z))
    assert k.kappa0 * (1 - 1e-12) <= v <= k.kappa1 * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-20, 20), y=st.floats(-20, 20), z=st.floats(-1e3, 1e3))
def test_reference_holder_inequality(x, y, z):
    k = reference_kernel()
    lhs = abs(float(k.evaluate(x, z)) - float(k.evaluate(y, z)))
    assert lhs <= k.kappa2 * abs(x - y) ** k.beta + 1e-15


def test_separable_kernel_matches_formula():
    k = separable_kernel([{"x": "1+0.2*sin(x)", "z": "1"}, {"x": "0.2*sin(x)", "z": "cos(2*z)"}],
                         1.0, 0.5, 0.6, 1.4, 0.4 * 2 ** 0.5)
    ref = reference_kernel()
    x = np.linspace(-3, 3, 13)[:, None]
    z = np.linspace(-4, 4, 17)[None, :]
    np.testing.assert_allclose(k.evaluate(x, z), ref.evaluate(x, z), atol=1e-14)
    assert k.coefficients(np.zeros(3)).shape == (3, 2)


def test_expression_whitelist():
    with pytest.raises(ValueError):
        expression_kernel("__import__('os')", 1.0, 0.5, 1.0, 1.0, 0.0)


def test_kernel_from_config_round_trip():
    k = kernel_from_config({"preset": "reference", "alpha": 1.0})
    assert k.name == "reference"
    assert kernel_from_config(k.config).config == k.config
    with pytest.raises(ValueError):
        kernel_from_config({"preset": "nope"})


def test_jump_intensity_and_shift():
    k = constant_kernel(2.0, 1.0)
    assert float(k.jump_intensity(0.0, 2.0)) == pytest.approx(0.5)
    assert float(k.shifted(0.1).evaluate(0.0, 1.0)) == pytest.approx(2.1)
