"""Acceptance suite: one test per headline criterion, each at its stated tolerance.

Every test records a one-line verdict; the lines are repeated in the
terminal summary of the pytest run.
"""
import math
import time
import warnings

import numpy as np
import pytest

from levikernel import SpaceTimeGrid, build_field, constant_kernel, kappa_from_matrix
from levikernel.mc_sim import (compare_with_parametrix, estimate_jump_intensity,
                               exit_probabilities, simulate_sde)
from levikernel.parametrix import picard_step, prepare_state
from levikernel.rho_calculus import run_lemma21_suite
from levikernel.validator import (PRESETS, check_chapman_kolmogorov, check_conservativeness,
                                  check_generator, check_kappa_continuity,
                                  check_maximum_principle, check_pde_residual, check_smoothing,
                                  check_two_sided_bounds)

LINES = []


def verdict(name, ok, text):
    line = f"{'PASS' if ok else 'FAIL'}  {name:<28} {text}"
    LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def tanh_runs(tanh_kernel, tanh_matrix, tanh_field):
    g = tanh_field.grid
    x0 = float(g.x[g.n // 2])
    t0 = time.perf_counter()
    ens = simulate_sde(tanh_matrix, x0, 0.5, 64, 100_000, seed=2024)
    neg = simulate_sde(tanh_matrix, x0, 0.5, 64, 100_000, seed=2025, alpha=1.5)
    main = compare_with_parametrix(tanh_field, ens, 0.5, seed=7)
    ctrl = compare_with_parametrix(tanh_field, neg, 0.5, seed=7, require_match=False)
    return ens, main, ctrl, time.perf_counter() - t0


def test_cauchy_closed_form_anchor():
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fld, _ = build_field(constant_kernel(1.0, 1.0), SpaceTimeGrid(), cache_dir=None)
    elapsed = time.perf_counter() - t0
    g = fld.grid
    W = g.x[:, None] - g.x[None, :]
    near = np.abs(W) <= 8
    worst = 0.0
    for t in g.t[(g.t >= 1 / 16 - 1e-12) & (g.t <= 0.5 + 1e-12)]:
        exact = t / ((math.pi * t) ** 2 + W ** 2)
        worst = max(worst, float(np.max(np.abs(fld.at(t) / exact - 1)[near])))
    verdict("cauchy-anchor", worst <= 1e-4 and elapsed <= 120,
            f"max rel err {worst:.2e} (tol 1e-4), build {elapsed:.1f}s (limit 120s)")


def test_zero_seed(ref_build, grid):
    st = prepare_state(constant_kernel(1.0, 1.0), grid)
    scale = ref_build[1].sup_norms[0]
    worst = max(float(np.max(np.abs(picard_step(st)))) for _ in range(3))
    verdict("zero-seed", worst <= 1e-8 * scale,
            f"sup|q_n| n=1..3 = {worst:.1e} (tol 1e-8 x {scale:.3g})")


def test_reference_series_truncation(ref_build):
    _, cert = ref_build
    R = np.array(cert.envelope_ratios)
    maj = np.array([cert.majorant(n, 0.5) for n in range(R.size)])
    dominated = bool(np.all(R <= maj * (1 + 1e-12)))
    verdict("reference-truncation", cert.N <= 8 and dominated,
            f"N = {cert.N} (limit 8), majorant dominates all {R.size} ratios: {dominated}, "
            f"constant {cert.prefactor:.3g}")


def test_two_sided_bounds(ref_field, ref_kernel, ref_ctx):
    rep = check_two_sided_bounds(ref_field, ref_kernel, ctx=ref_ctx)
    verdict("two-sided-bounds", rep.measured <= 50, f"C = {rep.measured:.3g} (limit 50)")


def test_conservativeness(ref_field, ref_kernel, ref_ctx):
    rep = check_conservativeness(ref_field, ref_kernel, ctx=ref_ctx)
    verdict("conservativeness", rep.measured <= 1e-3, f"defect {rep.measured:.2e} (tol 1e-3)")


def test_chapman_kolmogorov(ref_field, ref_kernel, ref_ctx):
    rep = check_chapman_kolmogorov(ref_field, ref_kernel, t=0.25, s=0.25, ctx=ref_ctx)
    verdict("chapman-kolmogorov", rep.measured <= 5e-3, f"defect {rep.measured:.2e} (tol 5e-3)")


def test_pde_residual(ref_field, ref_kernel, ref_coarse):
    rep = check_pde_residual(ref_field, ref_kernel, coarse=ref_coarse)
    ratio = rep.details.get("ratio", float("nan"))
    verdict("pde-residual", rep.measured <= 5e-3 and ratio >= 2,
            f"residual/rho {rep.measured:.2e} (tol 5e-3), coarse/fine {ratio:.2f} (need >= 2)")


def test_generator_sine(cauchy_field, cauchy_kernel, cauchy_ctx):
    rep = check_generator(cauchy_field, cauchy_kernel, f="sine",
                          reference=lambda x: -math.pi * np.sin(x), ctx=cauchy_ctx)
    verdict("generator", rep.measured <= 0.02, f"sup err {rep.measured:.2e} (tol 0.02)")


def test_smoothing(ref_field, ref_kernel, ref_ctx):
    rep = check_smoothing(ref_field, ref_kernel, times=(1 / 16, 1 / 8, 1 / 4), ctx=ref_ctx)
    v = rep.details["variation"]
    verdict("smoothing", v <= 0.25, f"variation {v:.1%} (limit 25%), constants "
            + ", ".join(f"{c:.3f}" for c in rep.details["by_t"]))


def test_maximum_principle(ref_field, ref_kernel, ref_ctx):
    rep = check_maximum_principle(ref_field, ref_kernel, presets=tuple(PRESETS), ctx=ref_ctx)
    verdict("maximum-principle", rep.measured <= 1e-3,
            f"max increase {rep.measured:.2e} over {len(PRESETS)} presets (tol 1e-3)")


def test_lemma_suite():
    t0 = time.perf_counter()
    recs = [r for a in (0.5, 1.0, 1.5) for r in run_lemma21_suite(a)]
    elapsed = time.perf_counter() - t0
    ok = all(r.passed and np.isfinite(r.measured_constant) for r in recs)
    worst = max(r.measured_constant / r.ceiling for r in recs)
    verdict("lemma-suite", ok and elapsed <= 60,
            f"{len(recs)} records pass, worst constant/ceiling {worst:.2f}, {elapsed:.1f}s "
            "(limit 60s)")


def test_kappa_continuity(ref_kernel, grid):
    rep = check_kappa_continuity(ref_kernel, grid=grid)
    slope = rep.details["slope"]
    verdict("kappa-continuity", abs(slope - 1) <= 0.15, f"slope {slope:.3f} (1 +- 0.15)")


def test_mc_cross_validation(tanh_runs):
    _, main, ctrl, elapsed = tanh_runs
    ok = main.passed and not ctrl.passed and elapsed <= 300
    verdict("mc-cross-validation", ok,
            f"L1 {main.measured:.3f} <= band {main.tolerance:.3f}; wrong alpha L1 "
            f"{ctrl.measured:.3f} rejected: {not ctrl.passed}; {elapsed:.0f}s (limit 300s)")


def test_levy_system(tanh_runs, tanh_kernel):
    ens = tanh_runs[0]
    rep = estimate_jump_intensity(ens, tanh_kernel, (0.0, 1.0), (4.0, 5.0))
    d = rep.details
    verdict("levy-system", rep.passed,
            f"empirical {d['empirical_rate']:.4f} vs predicted {d['predicted_rate']:.4f}, "
            f"difference CI [{d['difference_ci'][0]:.4f}, {d['difference_ci'][1]:.4f}]")


def test_exit_time():
    rep = exit_probabilities((1, 2, 4, 8), n_paths=20000, seed=11)
    p, ci = rep.details["probabilities"], rep.details["confidence"]
    verdict("exit-time", rep.passed,
            "P = " + ", ".join(f"{v:.3f}" for v in p) + f"; upper CI at A=8 {ci[-1][1]:.3f} < 0.5")
