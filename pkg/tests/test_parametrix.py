import json
import math
import warnings

import numpy as np
import pytest
from scipy import special

from conftest import ORACLES
from levikernel.frozen_kernel import SpaceTimeGrid, SpectralEngine
from levikernel.jump_kernel import constant_kernel, reference_kernel, separable_kernel
from levikernel.parametrix import (KernelField, NonConvergenceError, build_field, config_hash,
                                   forced_truncation, gamma_majorant_fit, heat_residual,
                                   picard_step, prepare_state, sum_series)
from levikernel.rho_calculus import RhoProfile

VALUES = json.loads((ORACLES / "values.json").read_text())
SMALL = SpaceTimeGrid(n=128, h=2 * math.pi / 32, dt=1 / 32, steps=8)
SINX = separable_kernel([{"x": "1+0.4*sin(x)", "z": "1"}], 1.0, 0.5, 0.6, 1.4, 0.4 * 2 ** 0.5)


def test_zero_seed_for_constant_kernel():
    st = prepare_state(constant_kernel(1.3), SMALL)
    assert st.zero_seed and not np.any(st.q0)
    for _ in range(3):
        assert not np.any(picard_step(st))
    st = prepare_state(constant_kernel(1.3), SMALL)
    cert = sum_series(st)
    assert cert.N == 0 and cert.sup_q == 0.0


def test_picard_step_order_enforced():
    st = prepare_state(reference_kernel(), SMALL)
    with pytest.raises(ValueError):
        picard_step(st, 2)


def test_cauchy_field_closed_form(cauchy_field):
    g = cauchy_field.grid
    W = g.x[:, None] - g.x[None, :]
    near = np.abs(W) <= 8
    worst = 0.0
    for t in g.t:
        exact = t / ((math.pi * t) ** 2 + W ** 2)
        worst = max(worst, float(np.max(np.abs(cauchy_field.at(t) / exact - 1)[near])))
    assert worst <= 1e-4


def test_q1_against_nested_quadrature():
    # time-step refinement of q1(1/4, x, y) extrapolated against the window oracle
    o = VALUES["q1_sinx"]
    vals = []
    for m in (1, 2, 4):
        g = SpaceTimeGrid(dt=1 / (64 * m), steps=16 * m)
        st = prepare_state(SINX, g)
        q1 = picard_step(st)
        assert g.t[-1] == pytest.approx(o["t"])
        vals.append(float(q1[-1, o["x_index"], o["y_index"]]))
        del st, q1
    errs = np.abs(np.array(vals) / o["value_window"] - 1)
    assert errs[0] > errs[1] > errs[2]
    v1, v2, v3 = vals
    order = math.log2((v1 - v2) / (v2 - v3))
    assert 1.0 < order < 2.5
    extrapolated = v3 + (v3 - v2) / (2 ** order - 1)
    assert extrapolated == pytest.approx(o["value_window"], rel=1e-4)
    # the window truncation itself is a sub-1e-3 effect
    assert o["value_window"] == pytest.approx(o["value_full_line"], rel=1e-3)


def test_reference_series_certificate(ref_build):
    fld, cert = ref_build
    assert cert.N <= 8
    R = np.array(cert.envelope_ratios)
    maj = np.array([cert.majorant(n, 0.5) for n in range(R.size)])
    assert np.all(R <= maj * (1 + 1e-12))
    assert cert.tail_bound < cert.rel_tol * cert.sup_q
    # one run constant bounds the Beta-normalised step ratios
    s = np.array(cert.sup_norms)
    c = [s[n] / s[n - 1] / special.beta(0.5, 0.5 * n) for n in range(1, s.size)]
    assert max(c) < 0.1 and max(c) / min(c) < 10
    # residual of the fitted rate stays bounded above
    n = np.arange(R.size)
    resid = np.log(R) + special.gammaln((n + 1) * 0.5) - (n + 1) * cert.log_rate
    assert resid.max() <= math.log(cert.prefactor) + 1e-9


def test_truncation_monotone_in_tolerance(ref_build):
    fld, cert = ref_build
    Ns = [forced_truncation(cert, fld.grid, 1.0, 0.5, tol) for tol in 1e-8 * 2.0 ** np.arange(14)]
    assert all(a >= b for a, b in zip(Ns, Ns[1:]))
    assert forced_truncation(cert, fld.grid, 1.0, 0.5, 1e-6) == cert.N


def test_gamma_majorant_fit_dominates():
    ratios = [0.5, 0.1, 0.03, 0.004, 0.0009]
    rate, c = gamma_majorant_fit(ratios, 0.5)
    for n, r in enumerate(ratios):
        assert r <= c * math.exp((n + 1) * rate - special.gammaln((n + 1) * 0.5)) * (1 + 1e-12)


def test_non_convergence_carries_ratios():
    st = prepare_state(reference_kernel(), SMALL)
    with pytest.raises(NonConvergenceError) as e:
        sum_series(st, rel_tol=1e-14, n_max=2)
    assert len(e.value.ratios) == 3


def test_field_save_load_and_cache(tmp_path):
    k = reference_kernel()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fld, cert = build_field(k, SMALL, cache_dir=tmp_path)
        again, cert2 = build_field(k, SMALL, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("field-*.npz"))) == 1
    np.testing.assert_array_equal(fld.values, again.values)
    assert cert2.N == cert.N
    fld.save(tmp_path / "f.npz")
    back = KernelField.load(tmp_path / "f.npz")
    assert back.grid == fld.grid
    assert back.provenance["config_hash"] == config_hash(k, fld.grid, 1e-6)
    assert config_hash(k, fld.grid, 1e-6) != config_hash(k, fld.grid, 1e-5)


def test_field_interpolation(ref_field):
    g = ref_field.grid
    i, j = 260, 250
    assert float(ref_field.evaluate(g.t[5], g.x[i], g.x[j])) == pytest.approx(ref_field.values[5, i, j])
    mid = float(ref_field.evaluate(0.5 * (g.t[5] + g.t[6]), g.x[i], g.x[j]))
    assert mid == pytest.approx(0.5 * (ref_field.values[5, i, j] + ref_field.values[6, i, j]))
    assert np.isnan(ref_field.evaluate(g.dt / 2, 0.0, 0.0))
    assert np.isnan(ref_field.evaluate(0.25, 1e3, 0.0))
    with pytest.raises(KeyError):
        ref_field.at(0.3)


def test_nonnegative_with_clip_report(ref_field, tanh_field):
    for fld in (ref_field, tanh_field):
        assert fld.values.min() >= 0
        assert fld.provenance["min_before_clip"] >= -1e-6
        assert "clipped" in fld.provenance


def test_reference_against_forward_solver(ref_field):
    o = VALUES["p_reference"]
    for t, expect in o["values"].items():
        got = ref_field.at(float(t))[o["x_index"], o["y_index"]]
        np.testing.assert_allclose(got, expect, rtol=1e-3)


def test_diagonal_growth_exponent(ref_field):
    g = ref_field.grid
    ks = [0, 1, 3, 7, 15, 31]                    # t = 2^-6 ... 2^-1
    for i in (200, 256, 330):
        d = ref_field.values[ks, i, i]
        slope = np.polyfit(np.log(g.t[ks]), np.log(d), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.05)


def test_correction_term_envelope(ref_field, ref_kernel):
    g = ref_field.grid
    eng = SpectralEngine(ref_kernel, g)
    W = g.x[:, None] - g.x[None, :]
    env_a, env_b = RhoProfile(0.0, 1.5, 1.0), RhoProfile(0.5, 1.0, 1.0)
    C = 0.0
    for t in g.t[::4]:
        corr = ref_field.at(t) - eng.frozen_matrix(t)
        C = max(C, float(np.max(np.abs(corr) / (env_a(t, W) + env_b(t, W)))))
    assert np.isfinite(C) and C < 50


def _cauchy_fd_error(t, dt, W):
    # error of the fourth-order time difference applied to the exact density
    v = lambda s: s / ((math.pi * s) ** 2 + W ** 2)
    exact = (W ** 2 - (math.pi * t) ** 2) / ((math.pi * t) ** 2 + W ** 2) ** 2
    fd = (v(t - 2 * dt) - 8 * v(t - dt) + 8 * v(t + dt) - v(t + 2 * dt)) / (12 * dt)
    return fd - exact


def test_heat_residual_constant_kernel(cauchy_field, cauchy_kernel):
    g = cauchy_field.grid
    rows = np.arange(g.n // 2 - 64, g.n // 2 + 64, 4)
    cols = np.array([g.n // 2, g.n // 2 + 10])
    W = g.x[rows][:, None] - g.x[cols][None, :]
    rho00 = RhoProfile(0.0, 0.0, 1.0)
    for t in (0.125, 0.25, 0.375):
        r = heat_residual(cauchy_field, cauchy_kernel, t, rows, cols)
        assert np.max(np.abs(r) / rho00(t, W)) <= 1e-3
    # below t = 1/8 the time difference dominates; the operator part stays exact
    for t in (1 / 16, 3 / 32):
        r = heat_residual(cauchy_field, cauchy_kernel, t, rows, cols)
        spatial = r - _cauchy_fd_error(t, g.dt, W)
        assert np.max(np.abs(spatial) / rho00(t, W)) <= 1e-3


def test_heat_residual_wrong_anchor(ref_field, ref_kernel):
    g = ref_field.grid
    rows = np.arange(g.n // 2 - 80, g.n // 2 + 80, 8)
    cols = np.array([g.n // 2, g.n // 2 + 20])
    right = heat_residual(ref_field, ref_kernel, 0.25, rows, cols, anchor="x")
    wrong = heat_residual(ref_field, ref_kernel, 0.25, rows, cols, anchor="y")
    q0 = SpectralEngine(ref_kernel, g).q0_matrix(0.25)[np.ix_(rows, cols)]
    assert np.abs(wrong).max() > 50 * np.abs(right).max()
    assert 0.5 < np.abs(wrong).max() / np.abs(q0).max() < 2
    with pytest.raises(ValueError):
        heat_residual(ref_field, ref_kernel, g.t[0], rows, cols)
    with pytest.raises(ValueError):
        heat_residual(ref_field, ref_kernel, 0.25, rows, cols, anchor="z")
