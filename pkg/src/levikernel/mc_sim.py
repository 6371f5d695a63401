"""Monte Carlo for ``dX = A(X-) dY`` with Y rotationally invariant alpha-stable.

Y is normalised so that ``E exp(i xi . Y_t) = exp(-t |xi|^alpha)``; the
generator of X then has the jump coefficient of
:func:`~levikernel.jump_kernel.kappa_from_matrix`.

Random numbers come from counter-based Philox streams, one per block of
``CHUNK`` paths, spawned from a single seed; the ensemble is therefore
identical for any thread count.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .jump_kernel import MatrixField, constant_matrix_field, kappa_from_matrix
from .validator import CheckReport

__all__ = [
    "StableSampler",
    "PathEnsemble",
    "BudgetError",
    "ConfigurationMismatch",
    "sample_stable_increment",
    "simulate_sde",
    "empirical_density",
    "compare_with_parametrix",
    "estimate_jump_intensity",
    "exit_probabilities",
    "kernel_hash",
    "ks_against_stable",
    "lower_bound_signature",
    "step_halving_guard",
]

CHUNK = 8192
DEFAULT_BUDGET = 5e8


class BudgetError(ValueError):
    """n_steps * n_paths exceeds the configured budget."""


class ConfigurationMismatch(ValueError):
    """Field and ensemble were built from different coefficients."""


def kernel_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=float).encode()).hexdigest()


# ---------------------------------------------------------------------------
# stable increments

@dataclass(frozen=True)
class StableSampler:
    """Isotropic alpha-stable increments with characteristic function exp(-dt |xi|^alpha).

    d=1 draws symmetric stable variables (Chambers-Mallows-Stuck); d=2 uses
    ``sqrt(2 S) N`` with S positive (alpha/2)-stable, ``E exp(-u S) = exp(-u^(alpha/2))``,
    and N standard normal.
    """

    alpha: float
    d: int = 1

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"alpha out of (0,2): {self.alpha}")
        if self.d not in (1, 2):
            raise ValueError("dimension must be 1 or 2")

    @property
    def method(self) -> str:
        return "chambers-mallows-stuck" if self.d == 1 else "subordinated-gaussian"

    def standard(self, size: int, rng) -> np.ndarray:
        """Unit-time draws: shape (size,) in d=1, (size, 2) in d=2."""
        a = self.alpha
        if self.d == 1:
            return stats.levy_stable.rvs(a, 0.0, size=size, random_state=rng)
        b = a / 2
        scale = math.cos(math.pi * b / 2) ** (1 / b)
        S = stats.levy_stable.rvs(b, 1.0, scale=scale, size=size, random_state=rng)
        return np.sqrt(2 * S)[:, None] * rng.standard_normal((size, 2))

    def quantile_abs(self, q: float = 0.99) -> float:
        """Quantile of |Y_1| (d=1) or of |Y_1| by simulation in d=2."""
        if self.d == 1:
            return float(stats.levy_stable.ppf(0.5 + q / 2, self.alpha, 0.0))
        rng = np.random.Generator(np.random.Philox(12345))
        return float(np.quantile(np.linalg.norm(self.standard(200000, rng), axis=1), q))


def sample_stable_increment(s: StableSampler, dt: float, rng, size: Optional[int] = None):
    """Increment of Y over a step dt (scaling dt^(1/alpha) of a unit draw)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = 1 if size is None else size
    z = s.standard(n, rng) * dt ** (1.0 / s.alpha)
    return z[0] if size is None else z


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class PathEnsemble:
    """Euler paths on the uniform time grid ``times`` with recorded large jumps.

    ``states`` has shape (n_paths, n_steps+1) in d=1 and (n_paths, n_steps+1, 2)
    in d=2.  A step counts as a jump when ``|dY| > threshold``, so unrecorded
    displacements are at most ``lambda1 * threshold`` (lambda1 bounds |A|); ``jumps``
    holds arrays ``path, step, pre, post`` (the step from times[step] to
    times[step+1]).
    """

    times: np.ndarray
    states: np.ndarray
    dt: float
    alpha: float
    seed: int
    threshold: float
    jumps: dict
    kernel_config: dict = field(default_factory=dict)
    lambda1: float = 1.0

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def kernel_hash(self) -> str:
        return kernel_hash(self.kernel_config)

    def at(self, t: float) -> np.ndarray:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 or not (0 <= k < len(self.times)):
            raise KeyError(f"t={t} is not a recorded time")
        return self.states[:, k]

    def save(self, path) -> None:
        np.savez_compressed(path, times=self.times, states=self.states,
                            meta=json.dumps({"dt": self.dt, "alpha": self.alpha, "seed": self.seed,
                                             "threshold": self.threshold,
                                             "kernel_config": self.kernel_config,
                                             "lambda1": self.lambda1}),
                            **{f"jump_{k}": v for k, v in self.jumps.items()})

    @classmethod
    def load(cls, path) -> "PathEnsemble":
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            jumps = {k[5:]: z[k] for k in z.files if k.startswith("jump_")}
            return cls(z["times"], z["states"], meta["dt"], meta["alpha"], meta["seed"],
                       meta["threshold"], jumps, meta["kernel_config"], meta.get("lambda1", 1.0))


def _euler_chunk(A: MatrixField, sampler, x0, n, n_steps, dt, threshold, rng):
    d = A.d
    shape = (n, n_steps + 1) if d == 1 else (n, n_steps + 1, d)
    X = np.empty(shape)
    X[:, 0] = x0
    scale = dt ** (1.0 / sampler.alpha)
    jp, js, jpre, jpost = [], [], [], []
    for s in range(n_steps):
        dY = sampler.standard(n, rng) * scale
        x = X[:, s]
        if d == 1:
            step = A(x) * dY
            size = np.abs(dY)
        else:
            step = np.einsum("pij,pj->pi", A.matrix(x), dY)
            size = np.linalg.norm(dY, axis=1)
        X[:, s + 1] = x + step
        big = np.flatnonzero(size > threshold)
        if big.size:
            jp.append(big)
            js.append(np.full(big.size, s))
            jpre.append(x[big])
            jpost.append(X[big, s + 1])
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite state in Euler scheme")
    cat = lambda lst, empty: np.concatenate(lst) if lst else empty
    e1 = np.zeros(0, dtype=int)
    ex = np.zeros((0,) if d == 1 else (0, d))
    return X, cat(jp, e1), cat(js, e1), cat(jpre, ex), cat(jpost, ex)


def simulate_sde(A: MatrixField, x0, t_end: float, n_steps: int, n_paths: int, seed: int,
                 alpha: float = 1.0, budget: float = DEFAULT_BUDGET, threads: int = 1,
                 threshold: Optional[float] = None) -> PathEnsemble:
    """Euler scheme ``X_{k+1} = X_k + A(X_k) dY_k`` for n_paths paths.

    Steps with ``|dY| > 2 dt^(1/alpha) q99`` (q99 the 99% quantile of |Y_1|)
    are recorded as jumps unless ``threshold`` is given.
    """
    if n_steps < 1 or n_paths < 1 or t_end <= 0:
        raise ValueError("need n_steps, n_paths >= 1 and t_end > 0")
    if n_steps * n_paths > budget:
        raise BudgetError(f"{n_steps} x {n_paths} exceeds budget {budget:g}")
    sampler = StableSampler(alpha, A.d)
    dt = t_end / n_steps
    if threshold is None:
        threshold = 2.0 * dt ** (1.0 / alpha) * sampler.quantile_abs(0.99)
    sizes = [min(CHUNK, n_paths - i) for i in range(0, n_paths, CHUNK)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    x0 = np.asarray(x0, dtype=float)

    def run(i):
        rng = np.random.Generator(np.random.Philox(streams[i]))
        return _euler_chunk(A, sampler, x0, sizes[i], n_steps, dt, threshold, rng)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    offsets = np.cumsum([0] + sizes[:-1])
    states = np.concatenate([p[0] for p in parts])
    jumps = {
        "path": np.concatenate([p[1] + o for p, o in zip(parts, offsets)]),
        "step": np.concatenate([p[2] for p in parts]),
        "pre": np.concatenate([p[3] for p in parts]),
        "post": np.concatenate([p[4] for p in parts]),
    }
    cfg = kappa_from_matrix(A, alpha).config
    return PathEnsemble(dt * np.arange(n_steps + 1), states, dt, alpha, seed, threshold, jumps,
                        cfg, float(A.lambda1))


# ---------------------------------------------------------------------------
# densities

@dataclass
class EmpiricalDensity:
    """Histogram density on ``edges`` with bootstrap bands and outside mass."""

    edges: np.ndarray
    density: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    counts: np.ndarray
    outside: float
    n: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def empirical_density(ens: PathEnsemble, t: float, edges, n_boot: int = 400, seed: int = 0,
                      level: float = 0.95, min_hits: int = 20) -> EmpiricalDensity:
    """Histogram of X_t normalised by the number of paths (d=1).

    Mass outside the edges is kept in ``outside`` so that the histogram
    plus the outside mass integrate to 1 exactly.  Pointwise bands are
    bootstrap percentiles of multinomial resamples.
    """
    x = ens.at(t)
    if x.ndim != 1:
        raise NotImplementedError("empirical densities are implemented in d=1")
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(x, edges)
    n = x.size
    w = np.diff(edges)
    if np.any(counts < min_hits):
        warnings.warn(f"{int(np.sum(counts < min_hits))} cells have fewer than {min_hits} hits",
                      RuntimeWarning, stacklevel=2)
    rng = np.random.Generator(np.random.Philox(seed))
    probs = np.append(counts, n - counts.sum()) / n
    boot = rng.multinomial(n, probs, size=n_boot)[:, :-1] / (n * w)
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return EmpiricalDensity(edges, counts / (n * w), lo, hi, counts, 1 - counts.sum() / n, n)


def compare_with_parametrix(fld, ens: PathEnsemble, t: float, x0: Optional[float] = None,
                            cells_per_bin: int = 4, radius: float = 8.0, n_boot: int = 400,
                            quadrature_tol: float = 2e-3, seed: int = 0,
                            require_match: bool = True) -> CheckReport:
    """L1 and sup distances between the histogram of X_t and p(t, x0, .).

    Bins merge ``cells_per_bin`` grid cells within ``radius`` of x0; the mass
    beyond is one extra bin.  Passes when the L1 distance is below the
    bootstrap mean + 3 sd of the L1 distance between resampled and observed
    histograms, plus ``quadrature_tol``.
    """
    if require_match:
        fh = kernel_hash(fld.provenance.get("kernel", {}))
        if fh != ens.kernel_hash:
            raise ConfigurationMismatch("field and ensemble kernels differ")
    x_start = float(ens.states[0, 0]) if x0 is None else x0
    g = fld.grid
    i0 = int(np.argmin(np.abs(g.x - x_start)))
    if abs(g.x[i0] - x_start) > 1e-9:
        raise ValueError("start point must be a grid node")
    m = int(radius / (g.h * cells_per_bin))
    lo, hi = i0 - m * cells_per_bin, i0 + m * cells_per_bin
    if lo < 0 or hi > g.n:
        raise ValueError("comparison window leaves the grid")
    idx = np.arange(lo, hi)
    edges = np.append(g.x[idx[::cells_per_bin]] - g.h / 2, g.x[idx[-1]] + g.h / 2)
    row = fld.at(t)[i0, idx] * g.h
    par = row.reshape(-1, cells_per_bin).sum(axis=1)
    par = np.append(par, 1.0 - par.sum())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        emp = empirical_density(ens, t, edges, n_boot=n_boot, seed=seed)
    ep = np.append(emp.counts, emp.n - emp.counts.sum()) / emp.n
    l1 = float(np.abs(ep - par).sum())
    sup = float(np.max(np.abs(ep[:-1] - par[:-1]) / np.diff(edges)))
    rng = np.random.Generator(np.random.Philox(seed + 1))
    boot = rng.multinomial(emp.n, ep, size=n_boot) / emp.n
    l1b = np.abs(boot - ep).sum(axis=1)
    band = float(l1b.mean() + 3 * l1b.std())
    bound = band + quadrature_tol
    return CheckReport("mc-vs-parametrix", {"t": t, "x0": x_start, "n_paths": ens.n_paths,
                                            "alpha_ensemble": ens.alpha, "bins": len(par)},
                       l1, bound, l1 <= bound,
                       details={"l1": l1, "sup": sup, "bootstrap_mean": float(l1b.mean()),
                                "bootstrap_sd": float(l1b.std()), "band": band})


# ---------------------------------------------------------------------------
# Levy system and exit times

def _interval_integral_J(kappa_x, x, lo, hi, alpha):
    """int_lo^hi |y - x|^(-1-alpha) dy for intervals not containing x."""
    a, b = lo - x, hi - x
    same = np.sign(a) == np.sign(b)
    if not np.all(same):
        raise ValueError("target interval contains a source point")
    ra, rb = np.abs(a), np.abs(b)
    near, far = np.minimum(ra, rb), np.maximum(ra, rb)
    return kappa_x * (near ** -alpha - far ** -alpha) / alpha


def estimate_jump_intensity(ens: PathEnsemble, k, source, target, n_boot: int = 1000,
                            seed: int = 0, level: float = 0.95) -> CheckReport:
    """Jumps from ``source`` into ``target`` per unit occupation time of the source,
    against ``int_target J(x, y) dy`` averaged over the occupation measure (d=1).

    The kernel must be x-dependent only through ``kappa(x)`` (matrix-induced in d=1).
    """
    (s0, s1), (t0, t1) = source, target
    if not (t0 > s1 or t1 < s0):
        raise ValueError("source and target must be disjoint")
    gap = t0 - s1 if t0 > s1 else s0 - t1
    if ens.threshold * ens.lambda1 >= gap:
        raise ValueError(f"jump threshold {ens.threshold:.3g} hides jumps across the gap {gap:g}; "
                         "use more steps")
    X = ens.states[:, :-1]
    inside = (X >= s0) & (X <= s1)
    occ_path = inside.sum(axis=1) * ens.dt
    if occ_path.sum() == 0:
        raise ZeroDivisionError("source region never occupied")
    pred = np.zeros_like(X)
    xs = X[inside]
    pred[inside] = _interval_integral_J(k.evaluate(xs, np.ones_like(xs)), xs, t0, t1, k.alpha)
    pred_path = pred.sum(axis=1) * ens.dt
    j = ens.jumps
    hit = (j["pre"] >= s0) & (j["pre"] <= s1) & (j["post"] >= t0) & (j["post"] <= t1)
    cnt_path = np.bincount(j["path"][hit], minlength=ens.n_paths).astype(float)
    rate = cnt_path.sum() / occ_path.sum()
    predicted = pred_path.sum() / occ_path.sum()
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.integers(0, ens.n_paths, (n_boot, ens.n_paths))
    occ_b = occ_path[idx].sum(axis=1)
    diff_b = (cnt_path[idx].sum(axis=1) - pred_path[idx].sum(axis=1)) / occ_b
    rate_b = cnt_path[idx].sum(axis=1) / occ_b
    lo, hi = np.quantile(diff_b, [(1 - level) / 2, (1 + level) / 2])
    rlo, rhi = np.quantile(rate_b, [(1 - level) / 2, (1 + level) / 2])
    ok = bool(lo <= 0.0 <= hi)
    return CheckReport("levy-system", {"source": list(source), "target": list(target),
                                       "n_paths": ens.n_paths, "level": level},
                       float(rate - predicted), float(max(abs(lo), abs(hi))), ok,
                       details={"empirical_rate": float(rate), "predicted_rate": float(predicted),
                                "rate_ci": [float(rlo), float(rhi)],
                                "difference_ci": [float(lo), float(hi)],
                                "jumps": int(cnt_path.sum()),
                                "occupation": float(occ_path.sum())})


def exit_probabilities(factors: Sequence[float] = (1, 2, 4, 8), r: float = 1.0, alpha: float = 1.0,
                       n_paths: int = 20000, n_steps: int = 256, seed: int = 0,
                       level: float = 0.95) -> CheckReport:
    """P(tau_{B(0, A r)} <= r^alpha) for the stable process, one ensemble for all A.

    Exit is detected on the step grid, so values are lower estimates of
    the continuous-time probabilities.  Passes when the estimates are
    nonincreasing in A (within the confidence intervals) and the upper
    confidence limit at the largest A is below 1/2.
    """
    A = constant_matrix_field(1.0)
    ens = simulate_sde(A, 0.0, r ** alpha, n_steps, n_paths, seed, alpha)
    run_max = np.max(np.abs(ens.states), axis=1)
    est, cis = [], []
    for f in factors:
        hits = int(np.sum(run_max >= f * r))
        ci = stats.binomtest(hits, n_paths).proportion_ci(level, method="wilson")
        est.append(hits / n_paths)
        cis.append((float(ci.low), float(ci.high)))
    monotone = all(cis[i + 1][0] <= cis[i][1] and est[i + 1] <= est[i] + 1e-12
                   for i in range(len(est) - 1))
    ok = monotone and cis[-1][1] < 0.5
    return CheckReport("exit-time", {"factors": list(factors), "r": r, "alpha": alpha,
                                     "n_paths": n_paths, "n_steps": n_steps},
                       est[-1], 0.5, ok,
                       details={"probabilities": est, "confidence": cis, "monotone": monotone})


# ---------------------------------------------------------------------------
# distributional helpers

def ks_against_stable(samples, alpha: float, loc: float = 0.0, scale: float = 1.0):
    """Kolmogorov-Smirnov test of d=1 samples against ``loc + scale * Y_1``."""
    x = np.asarray(samples, dtype=float)
    if alpha == 1.0:
        return stats.kstest(x, stats.cauchy(loc, scale).cdf)
    return stats.kstest(x, stats.levy_stable(alpha, 0.0, loc, scale).cdf)


def lower_bound_signature(ens: PathEnsemble, t: float, c4: float,
                          distances: Sequence[float] = (3.0, 5.0, 8.0), width: float = 0.5,
                          level: float = 0.95) -> CheckReport:
    """Heavy-tail floor: P(X_t in cell) >= (c4/2) t |y - x0|^(-1-alpha) |cell| (d=1).

    Cells of length ``width`` sit at distance ``D`` on both sides of x0.  The
    floor holds for a cell when the Wilson upper limit of its empirical
    probability exceeds it.
    """
    x = ens.at(t)
    x0 = float(ens.states[0, 0])
    n = x.size
    rows = []
    ok = True
    for D in distances:
        for sgn in (-1.0, 1.0):
            lo, hi = sorted((x0 + sgn * D, x0 + sgn * (D + width)))
            hits = int(np.sum((x >= lo) & (x < hi)))
            ci = stats.binomtest(hits, n).proportion_ci(level, method="wilson")
            floor = 0.5 * c4 * t * (D + width) ** (-1 - ens.alpha) * width
            rows.append({"distance": D, "side": sgn, "probability": hits / n,
                         "ci": [float(ci.low), float(ci.high)], "floor": floor})
            ok &= ci.high >= floor
    worst = min(r["probability"] / r["floor"] for r in rows)
    return CheckReport("lower-bound-signature", {"t": t, "c4": c4, "width": width,
                                                 "n_paths": n},
                       worst, 1.0, bool(ok), details={"cells": rows})


def step_halving_guard(A: MatrixField, x0, t_end: float, n_steps: int, n_paths: int, seed: int,
                       alpha: float = 1.0, n_rep: int = 8) -> CheckReport:
    """Euler self-convergence: the two-sample KS statistic between n_steps and
    2 n_steps ensembles should not exceed its own sampling spread by more than 1 sd.

    The spread is estimated from ``n_rep`` independent pairs at equal step counts.
    """
    a = simulate_sde(A, x0, t_end, n_steps, n_paths, seed, alpha).states[:, -1]
    b = simulate_sde(A, x0, t_end, 2 * n_steps, n_paths, seed + 1, alpha).states[:, -1]
    d_half = stats.ks_2samp(a, b).statistic
    null = []
    for r in range(n_rep):
        u = simulate_sde(A, x0, t_end, n_steps, n_paths, seed + 10 + 2 * r, alpha).states[:, -1]
        v = simulate_sde(A, x0, t_end, n_steps, n_paths, seed + 11 + 2 * r, alpha).states[:, -1]
        null.append(stats.ks_2samp(u, v).statistic)
    mu, sd = float(np.mean(null)), float(np.std(null, ddof=1))
    return CheckReport("step-halving", {"n_steps": n_steps, "n_paths": n_paths, "t": t_end},
                       float(d_half), mu + sd, bool(d_half <= mu + sd),
                       details={"null_mean": mu, "null_sd": sd, "null": null})
