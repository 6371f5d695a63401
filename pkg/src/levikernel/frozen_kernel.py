"""Frozen-coefficient heat kernels, their symbols, and the nonlocal operator.

Freezing the coefficient at an anchor y gives a translation-invariant
operator with Levy symbol

    psi_y(xi) = int (1 - cos<xi, z>) kappa(y, z) |z|^(-d-alpha) dz,

whose heat kernel is the inverse Fourier transform of exp(-t psi_y).  This
module provides

* :func:`levy_symbol` / :func:`symbol_of`: the symbol by quadrature, or in
  closed form for separable coefficients;
* :func:`frozen_density` / :class:`FrozenKernelTable`: densities by discrete
  Fourier inversion with an explicit correction for periodisation;
* :class:`SpectralEngine`: whole-grid tables (frozen kernels, the freezing
  defect q0, time-cell moments of both) used by the parametrix solver;
* :class:`FrozenOperator` / :func:`apply_frozen_operator`: the operator
  applied to sampled functions by product integration in real space;
* :func:`q0`: the freezing defect at a single point, computed in real space.

Two independent routes therefore exist for q0 and for the action of the
operator on densities: Fourier multipliers and real-space quadrature.
"""
from __future__ import annotations

import json
import warnings
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .jump_kernel import JumpKernel, stable_symbol_constant, normalising_constant

__all__ = [
    "SpaceTimeGrid",
    "LevySymbol",
    "levy_symbol",
    "symbol_of",
    "FrozenKernelTable",
    "frozen_density",
    "frozen_table",
    "frozen_density_2d",
    "SpectralEngine",
    "GridFunction",
    "FrozenOperator",
    "apply_frozen_operator",
    "q0",
]


# ---------------------------------------------------------------------------
# grid

@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform space-time grid of the d=1 solver.

    Space nodes are ``x_i = (i - (n-1)/2) h``; time nodes ``t_k = k dt`` for
    ``k = 1..steps``.  ``oversample`` refines the FFT grid relative to ``h``.
    ``inner_cells`` sets ``r_inner = inner_cells * h`` for the operator
    quadrature and ``outer_factor`` sets ``R_outer = outer_factor * extent``.
    """

    n: int = 512
    h: float = 2 * math.pi / 128
    dt: float = 1.0 / 64
    steps: int = 32
    oversample: int = 4
    inner_cells: int = 4
    outer_factor: float = 3.0

    def __post_init__(self):
        if self.n < 8 or self.h <= 0 or self.dt <= 0 or self.steps < 2:
            raise ValueError("degenerate grid")
        if self.oversample < 1 or self.inner_cells < 2:
            raise ValueError("oversample >= 1 and inner_cells >= 2 required")
        if self.r_inner >= self.R_outer:
            raise ValueError("need r_inner < R_outer")
        if self.t_max > 1.0 + 1e-12:
            raise ValueError("time grid must stay inside (0, 1]")

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) - (self.n - 1) / 2) * self.h

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(1, self.steps + 1)

    @property
    def t_max(self) -> float:
        return self.dt * self.steps

    @property
    def extent(self) -> float:
        """Half-width L of the window [-L, L] covered by the cells."""
        return self.n * self.h / 2

    @property
    def r_inner(self) -> float:
        return self.inner_cells * self.h

    @property
    def R_outer(self) -> float:
        return self.outer_factor * self.extent

    def resolved_for(self, k: JumpKernel, decay: float = 10.0,
                     max_oversample: int = 32) -> "SpaceTimeGrid":
        """Copy whose FFT grid resolves p(dt, .) for the kernel ``k``.

        The oversampling factor is raised (to a power of two) until
        ``dt * psi(xi_max) >= decay`` for the smallest frozen symbol, so the
        spectrum truncated at the FFT Nyquist frequency is negligible.
        """
        if k.separable:
            means = np.array([t.profile.mean_at_infinity for t in k.terms])
            k_min = float(np.min(k.coefficients(self.x) @ means))
        else:
            k_min = k.kappa0
        c = stable_symbol_constant(k.alpha, k.d)
        need = self.h / math.pi * (decay / (self.dt * k_min * c)) ** (1.0 / k.alpha)
        r = self.oversample
        while r < need and r < max_oversample:
            r *= 2
        if r < need:
            warnings.warn(f"p(dt) under-resolved: oversample {r} < {need:.0f}; refine dt or h",
                          RuntimeWarning, stacklevel=2)
        return self if r == self.oversample else replace(self, oversample=r)

    def coarsened(self) -> "SpaceTimeGrid":
        """Same window and horizon with both resolutions halved."""
        return SpaceTimeGrid(self.n // 2, 2 * self.h, 2 * self.dt, self.steps // 2,
                             self.oversample, self.inner_cells, self.outer_factor)

    def as_dict(self) -> dict:
        return {"n": self.n, "h": self.h, "dt": self.dt, "steps": self.steps,
                "oversample": self.oversample, "inner_cells": self.inner_cells,
                "outer_factor": self.outer_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceTimeGrid":
        return cls(**{k: d[k] for k in ("n", "h", "dt", "steps", "oversample", "inner_cells",
                                        "outer_factor") if k in d})


# ---------------------------------------------------------------------------
# symbols

@dataclass(frozen=True)
class LevySymbol:
    """Symbol psi_y of the operator frozen at ``anchor``.

    ``c_low |xi|^alpha <= psi <= c_high |xi|^alpha`` with the constants
    ``kappa0 / c`` and ``kappa1 / c`` (c the normalising constant).
    ``tail_coefficient`` is the coefficient A in ``psi ~ A |xi|^alpha`` as
    xi -> 0, which controls the algebraic tail of the density.  ``kinks``
    holds triples (omega, psi(omega), A_omega) for frequencies where
    ``psi - A_omega |xi - omega|^alpha`` is smooth; they produce oscillating
    algebraic tails.
    """

    anchor: object
    psi: Callable = field(repr=False)
    c_low: float
    c_high: float
    alpha: float
    d: int = 1
    tail_coefficient: float = float("nan")
    kinks: tuple = ()

    def __call__(self, xi):
        return self.psi(xi)


def _inner_moments(kfun, r, alpha, order=16):
    """int_0^r kfun(z) z^(1-alpha) dz and int_0^r kfun(z) z^(3-alpha) dz.

    ``kfun`` maps a 1-d array of z to an array of shape (..., len(z)).
    """
    u, wj = special.roots_jacobi(order, 0.0, 1.0 - alpha)
    z = 0.5 * r * (1 + u)
    vals = kfun(z)
    m2 = (0.5 * r) ** (2 - alpha) * (vals @ wj)
    m4 = (0.5 * r) ** (2 - alpha) * (vals @ (wj * z ** 2))
    return m2, m4


def _mean_at_infinity(g: Callable, start=200.0, stop=2200.0, num=400001) -> float:
    zz = np.linspace(start, stop, num)
    return float(np.mean(g(zz)))


def _symbol_1d_quad(g: Callable, xi: float, alpha: float, r_inner: Optional[float] = None,
                    R_outer: float = 1.0e4, mean_inf: Optional[float] = None) -> float:
    """2 int_0^inf (1 - cos(xi z)) g(z) z^(-1-alpha) dz for an even profile g."""
    xi = abs(float(xi))
    if xi == 0.0:
        return 0.0
    r = min(1e-2, 0.1 / xi) if r_inner is None else r_inner
    m2, m4 = _inner_moments(lambda z: np.asarray(g(z), dtype=float), r, alpha)
    inner = 2.0 * (0.5 * xi ** 2 * m2 - xi ** 4 / 24.0 * m4)
    w = lambda z: float(g(np.array(z))) * z ** (-1.0 - alpha)
    # split at 1 for the z^(-1-alpha) growth near r; beyond 10 use panels of
    # bounded length so oscillating profiles never exhaust the subdivisions
    pts = [r, 1.0, 10.0, *np.arange(100.0, R_outer, 100.0), R_outer]
    pts = sorted(p for p in set(pts) if r <= p <= R_outer)
    flat = osc = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        flat += integrate.quad(w, lo, hi, limit=200, epsabs=1e-14, epsrel=1e-12)[0]
        osc += integrate.quad(w, lo, hi, weight="cos", wvar=xi, limit=200,
                              epsabs=1e-14, epsrel=1e-12)[0]
    if mean_inf is None:
        mean_inf = _mean_at_infinity(g)
    far = mean_inf
    if xi >= 0.2:
        # a profile resonant with xi leaves a nonzero mean of g(z) cos(xi z)
        # (whole periods, endpoint excluded: a pure cosine averages to zero)
        span = 2 * math.pi / xi * math.ceil(2000.0 * xi / (2 * math.pi))
        zz = np.linspace(200.0, 200.0 + span, 400000, endpoint=False)
        far -= float(np.mean(np.asarray(g(zz), dtype=float) * np.cos(xi * zz)))
    tail = far * R_outer ** (-alpha) / alpha
    return inner + 2.0 * (flat - osc + tail)


def levy_symbol(k: JumpKernel, y, xi, r_inner: Optional[float] = None,
                R_outer: float = 1.0e4) -> np.ndarray:
    """psi_y(xi) by quadrature of the defining integral.

    |z| < r_inner uses ``1 - cos u = u^2/2 - u^4/24 + O(u^6)`` against Gauss-Jacobi
    weights; the middle range uses adaptive quadrature (QAWO for the cosine
    part); beyond R_outer the coefficient is replaced by its mean over large
    |z|, with the error bounded by ``2 kappa1 R_outer^(-alpha) / alpha``.  In d=2
    the coefficient must be homogeneous in z (angular formula) or the integral
    is done in polar coordinates (slow).
    """
    xi_arr = np.asarray(xi, dtype=float)
    if k.d == 1:
        g = lambda z: k.evaluate(np.full_like(np.asarray(z, float), float(y)), z)
        mean_inf = _mean_at_infinity(g)
        flat = xi_arr.ravel()
        out = np.array([_symbol_1d_quad(g, v, k.alpha, r_inner, R_outer, mean_inf)
                        for v in flat])
        return out.reshape(xi_arr.shape) if xi_arr.ndim else float(out[0])
    return _levy_symbol_2d(k, np.asarray(y, float), xi_arr, r_inner, R_outer)


def _levy_symbol_2d(k, y, xi, r_inner, R_outer, n_theta=256):
    xi2 = np.atleast_2d(xi)
    theta = (np.arange(n_theta) + 0.5) * 2 * np.pi / n_theta
    e = np.stack([np.cos(theta), np.sin(theta)], -1)
    out = np.empty(xi2.shape[0])
    C1 = stable_symbol_constant(k.alpha, 1)
    for i, v in enumerate(xi2):
        nv = np.linalg.norm(v)
        if nv == 0:
            out[i] = 0.0
            continue
        proj = np.abs(e @ v)
        if k.homogeneous:
            kap = k.evaluate(np.broadcast_to(y, e.shape), e)
            out[i] = 0.5 * C1 * np.sum(proj ** k.alpha * kap) * 2 * np.pi / n_theta
        else:
            acc = 0.0
            for th, p in zip(e, proj):
                g = lambda r_, th=th: k.evaluate(np.broadcast_to(y, np.shape(r_) + (2,)),
                                                  np.asarray(r_)[..., None] * th)
                acc += 0.5 * _symbol_1d_quad(g, p, k.alpha, r_inner, R_outer) if p > 0 else 0.0
            out[i] = acc * 2 * np.pi / n_theta
    return out.reshape(np.shape(xi)[:-1]) if np.ndim(xi) > 1 else float(out[0])


def _profile_symbol(profile, alpha):
    """Vectorised symbol of one separable z-profile (closed form or quadrature)."""
    if profile.symbol is not None:
        return lambda xi: profile.symbol(xi, alpha)
    mean = profile.mean_at_infinity

    def sym(xi):
        xi = np.asarray(xi, dtype=float)
        vals = [_symbol_1d_quad(profile.func, v, alpha, mean_inf=mean) for v in xi.ravel()]
        return np.array(vals).reshape(xi.shape)
    return sym


def _separable_basis(k: JumpKernel):
    """Basis symbols, their |xi|^alpha coefficients at 0, and their kinks.

    Kinks come back as ``{omega: array of per-term coefficients}``.
    """
    if k.d != 1 or not k.separable:
        raise NotImplementedError("spectral tables need a separable d=1 coefficient")
    C = stable_symbol_constant(k.alpha, 1)
    fns = [_profile_symbol(t.profile, k.alpha) for t in k.terms]
    tails = np.array([C * t.profile.mean_at_infinity for t in k.terms])
    kinks = {}
    for r_, t in enumerate(k.terms):
        for om, a in t.profile.kinks:
            kinks.setdefault(float(om), np.zeros(len(k.terms)))[r_] += C * a
    return fns, tails, kinks


def symbol_of(k: JumpKernel, y) -> LevySymbol:
    """The frozen symbol at ``y`` as a vectorised callable."""
    c = normalising_constant(k.d, k.alpha)
    lo, hi = k.kappa0 / c, k.kappa1 / c
    if k.d == 1 and k.separable:
        fns, tails, kinks = _separable_basis(k)
        coef = k.coefficients(np.array(float(y)))
        psi = lambda xi: sum(cr * f(np.abs(np.asarray(xi, float))) for cr, f in zip(coef, fns))
        kk = tuple((om, float(psi(np.array(om))), float(coef @ a)) for om, a in kinks.items())
        return LevySymbol(float(y), psi, lo, hi, k.alpha, 1, float(coef @ tails), kk)
    if k.d == 1:
        g = lambda z: k.evaluate(np.full_like(np.asarray(z, float), float(y)), z)
        mean = _mean_at_infinity(g)
        psi = lambda xi: levy_symbol(k, y, xi)
        return LevySymbol(float(y), psi, lo, hi, k.alpha, 1,
                          stable_symbol_constant(k.alpha, 1) * mean)
    psi = lambda xi: _levy_symbol_2d(k, np.asarray(y, float), np.asarray(xi, float), None, 1e4)
    return LevySymbol(tuple(np.asarray(y, float)), psi, lo, hi, k.alpha, 2)


# ---------------------------------------------------------------------------
# Fourier inversion with periodisation correction
#
# A discrete inversion on a frequency grid of spacing 2 pi / P returns the
# P-periodisation of the density.  Near xi = 0, exp(-t psi) has an expansion
# in |xi|^(k alpha), and the term c_k |xi|^(k alpha) produces the tail
# d_k |x|^(-1-k alpha) with d_k = -c_k Gamma(k alpha + 1) sin(pi k alpha / 2) / pi.
# The images of those tails sum to Hurwitz zeta values, which are subtracted.

def _image_sums(w, P, alpha, K):
    """d_k * sum_{m != 0} |w + m P|^(-1-k alpha) for k = 1..K, shape (K, len(w))."""
    w = np.asarray(w, dtype=float)
    out = np.zeros((K,) + w.shape)
    for k in range(1, K + 1):
        s = k * alpha + 1.0
        d = -special.gamma(k * alpha + 1.0) * math.sin(math.pi * k * alpha / 2) / math.pi
        if abs(d) < 1e-15:
            continue
        out[k - 1] = d * P ** (-s) * (special.zeta(s, 1.0 + w / P) + special.zeta(s, 1.0 - w / P))
    return out


def _alias_correction(w, P, alpha, coeffs, images=None):
    """Sum over the periodic images of the algebraic tails at offsets ``w``.

    ``coeffs[..., k-1]`` is the coefficient of |xi|^(k alpha), k = 1..K.
    """
    if images is None:
        images = _image_sums(w, P, alpha, coeffs.shape[-1])
    return np.einsum("...k,kw->...w", coeffs, images)


def _kink_correction(w, P, alpha, omega, coeffs, images=None):
    """Images of the tails from |xi -+ omega|^(k alpha) terms (needs omega P / 2 pi integral)."""
    return 2.0 * np.cos(omega * np.asarray(w, float)) * _alias_correction(w, P, alpha, coeffs,
                                                                          images)


def _commensurate(omega, P):
    m = omega * P / (2 * math.pi)
    return abs(m - round(m)) < 1e-9 * max(1.0, m)


def _exp_coefficients(tA, K=4):
    """Coefficients of |xi|^(k alpha) in exp(-tA |xi|^alpha), k = 1..K."""
    tA = np.asarray(tA, dtype=float)
    return np.stack([(-tA) ** k / math.factorial(k) for k in range(1, K + 1)], -1)


def _cos_sum(g, xi, P, points):
    """(1/P) [g0 + 2 sum_k g_k cos(xi_k x)], the last frequency taken as Nyquist."""
    wts = np.full(xi.shape, 2.0)
    wts[0] = 1.0
    wts[-1] = 1.0
    pts = np.asarray(points, dtype=float)
    out = np.empty(pts.shape)
    flat = pts.ravel()
    res = out.reshape(-1)
    for s in range(0, flat.size, 256):
        block = flat[s:s + 256]
        res[s:s + 256] = np.cos(np.outer(block, xi)) @ (wts * g) / P
    return out


# ---------------------------------------------------------------------------
# single-anchor densities

@dataclass
class FrozenKernelTable:
    """Frozen densities p_y(t_k, x_i) on a spatial grid.

    ``values[k, i]`` is the density at ``times[k]`` and ``x[i]``; between
    nodes the table interpolates linearly in x (``evaluate``).  The mass on
    the grid is reported together with a first-order estimate of the mass
    outside the grid, never renormalised.
    """

    anchor: float
    alpha: float
    d: int
    times: np.ndarray
    x: np.ndarray
    values: np.ndarray
    tail_mass: np.ndarray
    truncation: np.ndarray
    interpolation: str = "linear"
    lattice_alias: Optional[np.ndarray] = None

    def mass(self) -> np.ndarray:
        """Trapezoid mass on the grid plus the estimated outside mass.

        On uniform grids the Poisson-summation excess of the lattice sum
        (``lattice_alias``) is subtracted; it matters once t^(1/alpha) is
        comparable to the spacing.
        """
        m = integrate.trapezoid(self.values, self.x, axis=-1) + self.tail_mass
        return m if self.lattice_alias is None else m - self.lattice_alias

    def mass_defect(self) -> float:
        return float(np.max(np.abs(self.mass() - 1.0)))

    def evaluate(self, t: float, x):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, t):
            raise KeyError(f"time {t} not tabulated")
        return np.interp(x, self.x, self.values[k], left=np.nan, right=np.nan)

    def header(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "anchor": self.anchor,
                "times": list(map(float, self.times)), "nx": int(self.x.size),
                "x0": float(self.x[0]), "x1": float(self.x[-1]),
                "interpolation": self.interpolation}

    def save(self, path) -> None:
        extra = {} if self.lattice_alias is None else {"lattice_alias": self.lattice_alias}
        np.savez(path, header=json.dumps(self.header()), times=self.times, x=self.x,
                 values=self.values, tail_mass=self.tail_mass, truncation=self.truncation,
                 **extra)

    @classmethod
    def load(cls, path) -> "FrozenKernelTable":
        with np.load(path) as z:
            h = json.loads(str(z["header"]))
            alias = z["lattice_alias"] if "lattice_alias" in z.files else None
            return cls(h["anchor"], h["alpha"], h["d"], z["times"], z["x"], z["values"],
                       z["tail_mass"], z["truncation"], h["interpolation"], alias)

    def to_csv(self, path) -> None:
        cols = ["x"] + [f"t={t:.6g}" for t in self.times]
        data = np.column_stack([self.x, self.values.T])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="")


def _outside_mass(k: JumpKernel, y: float, t: float, L: float) -> float:
    """t * int_{|z| > L} kappa(y, z) |z|^(-1-alpha) dz (first order in t)."""
    if k.separable:
        coef = k.coefficients(np.array(float(y)))
        total = 0.0
        for c, term in zip(coef, k.terms):
            g = term.profile.func
            f = lambda z, g=g: float(g(np.array(z))) * z ** (-1.0 - k.alpha)
            total += c * integrate.quad(f, L, 50 * L, limit=2000)[0]
            total += c * term.profile.mean_at_infinity * (50 * L) ** (-k.alpha) / k.alpha
        return float(2 * t * total)
    g = lambda z: k.evaluate(np.full_like(np.asarray(z, float), float(y)), z)
    mean = _mean_at_infinity(g)
    f = lambda z: float(g(np.array(z))) * z ** (-1.0 - k.alpha)
    val = integrate.quad(f, L, 50 * L, limit=2000)[0] + mean * (50 * L) ** (-k.alpha) / k.alpha
    return float(2 * t * val)


def frozen_table(k: JumpKernel, y: float, times: Sequence[float], x=None,
                 grid: Optional[SpaceTimeGrid] = None, period: Optional[float] = None,
                 alias_terms: int = 4) -> FrozenKernelTable:
    """Frozen densities at anchor ``y`` for several times (d=1).

    The frequency cut-off K is chosen per table so that
    ``exp(-t_min c_low K^alpha) < 1e-10``; the reported ``truncation`` holds
    that bound for each slice.  The inversion is evaluated directly at the
    requested points, so ``x`` need not be uniform.
    """
    if k.d != 1:
        raise NotImplementedError("use frozen_density_2d in d=2")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times <= 0) or np.any(times > 1.0 + 1e-12):
        raise ValueError("times must lie in (0, 1]")
    grid = grid or SpaceTimeGrid()
    x = grid.x if x is None else np.asarray(x, dtype=float)
    ax = np.abs(x)
    sym = symbol_of(k, y)
    span = float(np.max(ax)) if x.size else 1.0
    P = period or 2 * math.pi * math.ceil(max(4.0 * span + 20.0, 2 * math.pi * 16) / (2 * math.pi))
    K = (23.0 / (times.min() * sym.c_low)) ** (1.0 / k.alpha)
    nf = int(math.ceil(K * P / (2 * math.pi))) + 1
    xi = 2 * math.pi * np.arange(nf) / P
    S = np.asarray(sym(xi), dtype=float)
    vals = np.empty((times.size, x.size))
    for m, t in enumerate(times):
        g = np.exp(-t * S)
        # the density is even; evaluating at |x| makes that exact
        vals[m] = _cos_sum(g, xi, P, ax) - _alias_correction(
            ax, P, k.alpha, _exp_coefficients(t * sym.tail_coefficient, alias_terms))
        for om, s_om, a_om in sym.kinks:
            if _commensurate(om, P):
                co = math.exp(-t * s_om) * _exp_coefficients(t * a_om, alias_terms)
                vals[m] -= _kink_correction(ax, P, k.alpha, om, co)
    L = 0.5 * (x.max() - x.min()) if x.size > 1 else 0.0
    tails = np.array([_outside_mass(k, y, t, max(L, 1e-3)) for t in times])
    trunc = np.exp(-times * sym.c_low * xi[-1] ** k.alpha)
    alias = None
    if x.size > 2 and np.allclose(np.diff(x), x[1] - x[0], rtol=1e-9, atol=0):
        # h sum_i p(x_0 + i h) = 1 + 2 sum_m exp(-t psi(2 pi m / h)) cos(2 pi m x_0 / h)
        hx = float(x[1] - x[0])
        m = np.arange(1, 65)
        Sm = np.asarray(sym(2 * math.pi * m / hx), dtype=float)
        alias = 2.0 * np.exp(-np.outer(times, Sm)) @ np.cos(2 * math.pi * m * x[0] / hx)
    return FrozenKernelTable(float(y), k.alpha, 1, times, x, vals, tails, trunc, "linear", alias)


def frozen_density(k: JumpKernel, y: float, t: float, x=None,
                   grid: Optional[SpaceTimeGrid] = None, **kw) -> FrozenKernelTable:
    """Single-slice :func:`frozen_table`; ``table.values[0]`` holds p_y(t, x)."""
    return frozen_table(k, y, [t], x, grid, **kw)


def frozen_density_2d(k: JumpKernel, y, t: float, n: int = 256, h: float = 0.1):
    """Frozen density on an n x n tensor grid (d=2, coarse).

    Returns ``(x1, x2, values, mass_defect)``.  No periodisation correction is
    applied in d=2; the mass defect on the grid reports its size.
    """
    if k.d != 2:
        raise ValueError("d=2 kernel expected")
    sym = symbol_of(k, y)
    xi1 = 2 * np.pi * np.fft.fftfreq(n, d=h)
    KX, KY = np.meshgrid(xi1, xi1, indexing="ij")
    nrm = np.hypot(KX, KY)
    if k.homogeneous:
        # psi is alpha-homogeneous: evaluate on the unit circle and scale
        ang = np.arctan2(KY, KX)
        grid_ang = np.linspace(-np.pi, np.pi, 721)
        unit = np.array([sym(np.array([math.cos(a), math.sin(a)])) for a in grid_ang])
        S = np.interp(ang, grid_ang, unit) * nrm ** k.alpha
    else:
        S = np.asarray(sym(np.stack([KX, KY], -1).reshape(-1, 2))).reshape(n, n)
    vals = np.real(np.fft.fftshift(np.fft.ifft2(np.exp(-t * S)))) / h ** 2
    coords = (np.arange(n) - n // 2) * h
    return coords, coords, vals, float(abs(vals.sum() * h * h - 1.0))


# ---------------------------------------------------------------------------
# whole-grid spectral tables

def _phi0(x):
    """(1 - exp(-x)) / x, with its series for small x."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1 - x / 2 + x ** 2 / 6, -np.expm1(-xs) / xs)


def _phi1(x):
    """(1 - exp(-x) - x exp(-x)) / x^2, with its series for small x."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-3
    xs = np.where(small, 1.0, x)
    big = (-np.expm1(-xs) - xs * np.exp(-xs)) / xs ** 2
    return np.where(small, 0.5 - x / 3 + x ** 2 / 8 - x ** 3 / 30, big)


def _cell_time_coefficients(a, b, K, moment):
    """T_m = int_a^b w(tau) tau^m / m! dtau for m = 0..K (w = 1 or the hat (tau-a)/(b-a))."""
    out = []
    for m in range(K + 1):
        if moment == 0:
            v = (b ** (m + 1) - a ** (m + 1)) / (m + 1)
        else:
            v = ((b ** (m + 2) - a ** (m + 2)) / (m + 2)
                 - a * (b ** (m + 1) - a ** (m + 1)) / (m + 1)) / (b - a)
        out.append(v / math.factorial(m))
    return np.array(out)


class SpectralEngine:
    """Frozen kernels and freezing defects on the whole grid, for separable d=1 kernels.

    With ``kappa(x, z) = sum_r U_r(x) g_r(z)`` every frozen symbol is
    ``S_j = sum_r U_r(y_j) V_r`` with fixed basis symbols V_r, so all anchors
    share one FFT grid.  Tables are indexed by offset ``x_i - y_j``; the
    ``*_matrix`` methods return arrays ``[i, j]`` with x along rows and the
    anchor y along columns.

    Time-cell moments (``*_moments``) integrate over ``tau`` in
    ``[c dt, (c+1) dt]`` against 1 and the hat ``(tau - c dt)/dt`` exactly in
    Fourier space, and average over a spatial cell of width h, which keeps
    the near-diagonal singularities of the small-time kernels integrable.
    """

    def __init__(self, k: JumpKernel, grid: SpaceTimeGrid, alias_terms: int = 4):
        self.kernel, self.grid, self.K = k, grid, alias_terms
        fns, self.tail_a, kinks = _separable_basis(k)
        n, h, r = grid.n, grid.h, grid.oversample
        self.n, self.h = n, h
        self.hp = h / r
        self.x = grid.x
        p_min = 4.0 * abs(self.x[-1]) + 10.0
        self.N = int(2 ** math.ceil(math.log2(p_min / self.hp)))
        self.P = self.N * self.hp
        self.xi = 2 * math.pi * np.arange(self.N // 2 + 1) / self.P
        self.V = np.stack([np.asarray(f(self.xi), dtype=float) for f in fns])
        self.U = k.coefficients(self.x)
        self.S = self.U @ self.V
        self.A = self.U @ self.tail_a
        self.offsets = np.arange(-(n - 1), n)
        self.w = self.offsets * h
        self._idx = (self.offsets * r) % self.N
        self.sinc = np.sinc(self.xi * h / (2 * math.pi))
        self._images = _image_sums(self.w, self.P, k.alpha, alias_terms)
        # kinks of the basis symbols away from 0: (omega, V_r(omega), a_r, cos(omega w))
        self.kinks = []
        for om, a in kinks.items():
            if _commensurate(om, self.P):
                v_om = np.array([float(f(np.array(om))) for f in fns])
                self.kinks.append((om, v_om, a, np.cos(om * self.w)))
        self.zero_defect = bool(np.all(np.ptp(self.U, axis=0) == 0.0))

    # -- transforms
    def _transform(self, g):
        G = np.fft.irfft(g, n=self.N, axis=-1) / self.hp
        return G[..., self._idx]

    def _alias(self, coeffs):
        return _alias_correction(self.w, self.P, self.kernel.alpha, coeffs, self._images)

    def _kink_coefficients(self, taus, wts, r_=None):
        """Per kink, coefficients (anchors, K) of |xi - omega|^(k alpha) in
        sum_g wts_g [V_r] exp(-tau_g S), averaged over the time nodes."""
        out = []
        for om, v_om, a, cosw in self.kinks:
            S_om = self.U @ v_om
            A_om = self.U @ a
            co = np.zeros((self.n, self.K))
            for tau, wt in zip(taus, wts):
                e = wt * np.exp(-tau * S_om)
                for k in range(1, self.K + 1):
                    term = (-tau * A_om) ** k / math.factorial(k)
                    if r_ is None:
                        co[:, k - 1] += e * term
                    else:
                        co[:, k - 1] += e * (v_om[r_] * term + a[r_] * (-tau * A_om) ** (k - 1)
                                             / math.factorial(k - 1))
            out.append(co)
        return out

    def _kink(self, coeff_list, scale=1.0):
        corr = 0.0
        for (om, _, _, cosw), co in zip(self.kinks, coeff_list):
            corr = corr + 2.0 * cosw * scale * self._alias(co)
        return corr

    def _cell_nodes(self, c, moment, order=8):
        a = c * self.grid.dt
        b = a + self.grid.dt
        gx, gw = np.polynomial.legendre.leggauss(order)
        tau = a + 0.5 * (gx + 1) * (b - a)
        w = 0.5 * (b - a) * gw * (1.0 if moment == 0 else (tau - a) / (b - a))
        return tau, w

    # -- pointwise tables
    def frozen_offsets(self, t):
        """p_{y_j}(t, w) for anchors j (rows) and offsets w (columns)."""
        g = np.exp(-t * self.S)
        return (self._transform(g) - self._alias(_exp_coefficients(t * self.A, self.K))
                - self._kink(self._kink_coefficients([t], [1.0])))

    def q0_offsets(self, t):
        """Transforms of V_r exp(-t S_j): array (R, anchors, offsets)."""
        E = np.exp(-t * self.S)
        out = []
        for r_, Vr in enumerate(self.V):
            co = np.stack([self.tail_a[r_] * (-t * self.A) ** (k - 1) / math.factorial(k - 1)
                           for k in range(1, self.K + 1)], -1)
            out.append(self._transform(Vr * E) - self._alias(co)
                       - self._kink(self._kink_coefficients([t], [1.0], r_)))
        return np.stack(out)

    # -- time-cell moments
    def _cell_factor(self, c, moment):
        a = c * self.grid.dt
        x = self.grid.dt * self.S
        phi = _phi0(x) if moment == 0 else _phi1(x)
        return phi * np.exp(-a * self.S) * self.grid.dt, a, a + self.grid.dt

    def _sinc_at(self, om):
        return float(np.sinc(om * self.h / (2 * math.pi)))

    def frozen_moment_offsets(self, c, moment):
        f, a, b = self._cell_factor(c, moment)
        T = _cell_time_coefficients(a, b, self.K, moment)
        co = np.stack([(-self.A) ** k * T[k] for k in range(1, self.K + 1)], -1)
        tau, wt = self._cell_nodes(c, moment)
        kinks = self._kink_coefficients(tau, wt)
        kinks = [kc * self._sinc_at(om) for kc, (om, *_rest) in zip(kinks, self.kinks)]
        return self._transform(f * self.sinc) - self._alias(co) - self._kink(kinks)

    def q0_moment_offsets(self, c, moment):
        f, a, b = self._cell_factor(c, moment)
        T = _cell_time_coefficients(a, b, self.K, moment)
        tau, wt = self._cell_nodes(c, moment)
        out = []
        for r_, Vr in enumerate(self.V):
            g = Vr * f * self.sinc
            if c == 0:
                # V_r f tends to a constant at high frequency (a point mass at
                # offset 0); take it out before the transform
                c_inf = g[:, -1] / self.sinc[-1]
                g = g - c_inf[:, None] * self.sinc
            co = np.stack([self.tail_a[r_] * (-self.A) ** (k - 1) * T[k - 1]
                           for k in range(1, self.K + 1)], -1)
            kinks = self._kink_coefficients(tau, wt, r_)
            kinks = [kc * self._sinc_at(om) for kc, (om, *_rest) in zip(kinks, self.kinks)]
            G = self._transform(g) - self._alias(co) - self._kink(kinks)
            if c == 0:
                G[:, self.n - 1] += c_inf / self.h
            out.append(G)
        return np.stack(out)

    # -- matrices [i, j] = value at x_i for anchor y_j
    def _gather(self, Gw):
        n = self.n
        i = np.arange(n)[:, None]
        j = np.arange(n)[None, :]
        return Gw[j, i - j + n - 1]

    def _defect(self, G):
        """sum_r (U_r(y_j) - U_r(x_i)) G_r: the symbol of (L_x - L_y) on p_y."""
        n = self.n
        out = np.zeros((n, n))
        i = np.arange(n)[:, None]
        j = np.arange(n)[None, :]
        for r_ in range(G.shape[0]):
            dU = self.U[:, r_][None, :] - self.U[:, r_][:, None]
            if np.any(dU):
                out += dU * G[r_][j, i - j + n - 1]
        return out

    def frozen_matrix(self, t):
        return self._gather(self.frozen_offsets(t))

    def q0_matrix(self, t):
        if self.zero_defect:
            return np.zeros((self.n, self.n))
        return self._defect(self.q0_offsets(t))

    def frozen_moments(self, c):
        return tuple(self._gather(self.frozen_moment_offsets(c, m)) for m in (0, 1))

    def q0_moments(self, c):
        if self.zero_defect:
            z = np.zeros((self.n, self.n))
            return z, z.copy()
        return tuple(self._defect(self.q0_moment_offsets(c, m)) for m in (0, 1))

    def lattice_alias(self, t, m_max=8):
        """2 sum_{m>=1} exp(-t psi_x(2 pi m / h)) per grid anchor x.

        The excess of the lattice sum ``h sum_j p_x(t, x - y_j)`` over the
        integral (Poisson summation); frequencies past the FFT range use
        ``psi(m xi_1) ~ m^alpha psi(xi_1)``.
        """
        step = self.N // self.grid.oversample
        out = np.zeros(self.n)
        S1 = self.S[:, step]
        for m in range(1, m_max + 1):
            j = m * step
            S = self.S[:, j] if j < self.S.shape[1] else m ** self.kernel.alpha * S1
            out += 2.0 * np.exp(-t * S)
        return out

    def frozen_at(self, t, w):
        """p_{y_j}(t, w) at arbitrary offsets w (rows) for all anchors (columns)."""
        w = np.asarray(w, dtype=float)
        wts = np.full(self.xi.shape, 2.0)
        wts[0] = wts[-1] = 1.0
        g = np.exp(-t * self.S) * wts
        vals = (np.cos(np.outer(w, self.xi)) @ g.T) / self.P
        images = _image_sums(w, self.P, self.kernel.alpha, self.K)
        vals -= _alias_correction(w, self.P, self.kernel.alpha,
                                  _exp_coefficients(t * self.A, self.K), images).T
        for (om, *_rest), co in zip(self.kinks, self._kink_coefficients([t], [1.0])):
            vals -= (2.0 * np.cos(om * w) * _alias_correction(w, self.P, self.kernel.alpha,
                                                               co, images)).T
        return vals


# ---------------------------------------------------------------------------
# real-space operator

@dataclass
class GridFunction:
    """Samples ``values[m]`` of a function at ``x0 + m h``.

    ``far_value`` (vectorised) supplies the function off the sampled range;
    without it the function is taken as zero there.
    """

    x0: float
    h: float
    values: np.ndarray
    far_value: Optional[Callable] = None

    @property
    def nodes(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(len(self.values))

    def index_of(self, x: float) -> int:
        m = (x - self.x0) / self.h
        i = int(round(m))
        if abs(m - i) > 1e-8 or not (0 <= i < len(self.values)):
            raise ValueError("evaluation point must be a sample node")
        return i

    def extended(self, pad: int) -> np.ndarray:
        """Values on the node range padded by ``pad`` nodes on each side."""
        left = self.x0 - self.h * np.arange(pad, 0, -1)
        right = self.x0 + self.h * (len(self.values) + np.arange(pad))
        if self.far_value is None:
            lv, rv = np.zeros(pad), np.zeros(pad)
        else:
            lv, rv = self.far_value(left), self.far_value(right)
        return np.concatenate([lv, self.values, rv])


_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
_THETA = 0.5 * (_GL8_X + 1.0)
_OMEGA = 0.5 * _GL8_W
# cubic Lagrange basis on nodes -1, 0, 1, 2 evaluated at theta in (0, 1)
_LAGR = np.stack([
    -_THETA * (_THETA - 1) * (_THETA - 2) / 6,
    (_THETA + 1) * (_THETA - 1) * (_THETA - 2) / 2,
    -(_THETA + 1) * _THETA * (_THETA - 2) / 2,
    (_THETA + 1) * _THETA * (_THETA - 1) / 6,
], -1)


class FrozenOperator:
    """Product-integration rule for ``1/2 int delta_f(x; z) w_i(z) |z|^(-1-alpha) dz``.

    One row per evaluation point; row i uses the z-weight ``weight(z)[i]``
    (for the operator frozen at a_i this is kappa(a_i, z), for q0 it is a
    difference of two coefficients).  With ``r = inner_cells * h``:

    * ``|z| < r``: ``delta_f = f'' z^2 + f'''' z^4 / 12 + ...`` with 5-point
      stencils, against Gauss-Jacobi moments of the weight;
    * ``r <= |z| <= Z``: f interpolated by cubic Lagrange polynomials on each
      cell, integrated against the weight with 8-point Gauss-Legendre;
    * ``|z| > Z``: only the ``-2 f(x)`` part is kept, with the weight's
      integral taken from ``tail_integral``; the dropped part is bounded by
      ``2 kappa1 sup|f| Z^(-alpha) / alpha`` and reported as ``tail_bound``.
    """

    def __init__(self, weight: Callable, alpha: float, h: float, outer_cells: int,
                 rows: int, tail_integral: Callable, kappa_sup: float, inner_cells: int = 4):
        self.alpha, self.h = alpha, h
        self.inner, self.outer = inner_cells, outer_cells
        r = inner_cells * h
        self.m2, self.m4 = _inner_moments(weight, r, alpha)
        cells = np.arange(inner_cells, outer_cells)
        z = ((cells[:, None] + _THETA[None, :]) * h).ravel()
        wz = np.asarray(weight(z), dtype=float).reshape(rows, cells.size, _THETA.size)
        wz = wz * (z.reshape(cells.size, _THETA.size) ** (-1.0 - alpha))[None]
        B = np.einsum("img,g,gq->imq", wz, _OMEGA * h, _LAGR)
        n_off = outer_cells + 2
        Wp = np.zeros((rows, n_off + 1))
        for q in range(4):
            Wp[:, cells + q - 1] += B[:, :, q]
        self.Wp = Wp
        self.T_far = tail_integral(outer_cells * h)
        self.T = wz.reshape(rows, -1) @ np.tile(_OMEGA * h, cells.size) + self.T_far
        self.tail_bound_factor = 2.0 * kappa_sup * (outer_cells * h) ** (-alpha) / alpha
        self.pad = n_off

    def apply(self, fext: np.ndarray, centers: np.ndarray) -> np.ndarray:
        """Operator values at ``fext[centers[i]]`` (row i); fext must cover +-pad."""
        centers = np.asarray(centers)
        offs = np.arange(self.Wp.shape[1])
        plus = fext[centers[:, None] + offs[None, :]]
        minus = fext[centers[:, None] - offs[None, :]]
        f0 = fext[centers]
        outer = np.sum(self.Wp * (plus + minus), axis=1) - 2.0 * f0 * self.T
        fm2, fm1, fp1, fp2 = (fext[centers + s] for s in (-2, -1, 1, 2))
        d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * self.h ** 2)
        d4 = (fm2 - 4 * fm1 + 6 * f0 - 4 * fp1 + fp2) / self.h ** 4
        return outer + self.m2 * d2 + self.m4 * d4 / 12.0

    def matrix(self, centers: np.ndarray, width: int) -> np.ndarray:
        """Dense matrix M with ``apply(f, centers) = M @ f`` for f of length ``width``."""
        rows = len(centers)
        M = np.zeros((rows, width))
        ar = np.arange(rows)
        offs = np.arange(1, self.Wp.shape[1])
        for sgn in (1, -1):
            cols = np.asarray(centers)[:, None] + sgn * offs[None, :]
            np.add.at(M, (np.repeat(ar, offs.size), cols.ravel()), self.Wp[:, 1:].ravel())
        M[ar, centers] += 2 * self.Wp[:, 0] - 2.0 * self.T
        st2 = np.array([-1, 16, -30, 16, -1]) / (12 * self.h ** 2)
        st4 = np.array([1, -4, 6, -4, 1]) / self.h ** 4
        for s, (a2, a4) in zip(range(-2, 3), zip(st2, st4)):
            M[ar, np.asarray(centers) + s] += self.m2 * a2 + self.m4 * a4 / 12.0
        return M


def _tail_integral_fn(k: JumpKernel, anchors: np.ndarray, sign_pair=None):
    """Z -> int_Z^inf w_i(z) z^(-1-alpha) dz per row (exact for separable profiles)."""
    a = k.alpha

    def per_profile_tail(g, mean, Z):
        f = lambda z: float(g(np.array(z))) * z ** (-1.0 - a)
        Z2 = 64.0 * Z
        return integrate.quad(f, Z, Z2, limit=4000)[0] + mean * Z2 ** (-a) / a

    def coef_rows(pts):
        return k.coefficients(pts)

    def fn(Z):
        if k.separable:
            tails = np.array([per_profile_tail(t.profile.func, t.profile.mean_at_infinity, Z)
                              for t in k.terms])
            c = coef_rows(anchors) if sign_pair is None else (
                coef_rows(sign_pair[0]) - coef_rows(sign_pair[1]))
            return c @ tails
        rows = []
        for i in range(len(anchors)):
            if sign_pair is None:
                g = lambda z, y=anchors[i]: k.evaluate(np.full_like(np.asarray(z, float), y), z)
            else:
                g = lambda z, x=sign_pair[0][i], y=sign_pair[1][i]: (
                    k.evaluate(np.full_like(np.asarray(z, float), x), z)
                    - k.evaluate(np.full_like(np.asarray(z, float), y), z))
            rows.append(per_profile_tail(g, _mean_at_infinity(g), Z))
        return np.array(rows)
    return fn


def frozen_operator(k: JumpKernel, anchors, h: float, outer_cells: int,
                    inner_cells: int = 4, difference_with=None) -> FrozenOperator:
    """Operator rule with rows frozen at ``anchors`` (d=1).

    With ``difference_with`` (same length as anchors) the weight is
    ``kappa(anchor_i, z) - kappa(difference_with_i, z)``.
    """
    if k.d != 1:
        raise NotImplementedError("the real-space operator is implemented in d=1")
    anchors = np.atleast_1d(np.asarray(anchors, dtype=float))
    rows = anchors.size
    if difference_with is None:
        if k.separable:
            C = k.coefficients(anchors)
            weight = lambda z: C @ np.stack([np.broadcast_to(t.profile.func(z), z.shape)
                                             for t in k.terms])
        else:
            weight = lambda z: k.evaluate(anchors[:, None], np.asarray(z)[None, :])
        tail = _tail_integral_fn(k, anchors)
        sup = k.kappa1
    else:
        other = np.atleast_1d(np.asarray(difference_with, dtype=float))
        if k.separable:
            C = k.coefficients(anchors) - k.coefficients(other)
            weight = lambda z: C @ np.stack([np.broadcast_to(t.profile.func(z), z.shape)
                                             for t in k.terms])
        else:
            weight = lambda z: (k.evaluate(anchors[:, None], np.asarray(z)[None, :])
                                - k.evaluate(other[:, None], np.asarray(z)[None, :]))
        tail = _tail_integral_fn(k, anchors, (anchors, other))
        sup = k.kappa1 - k.kappa0
    return FrozenOperator(weight, k.alpha, h, outer_cells, rows, tail, sup, inner_cells)


def apply_frozen_operator(k: JumpKernel, x_anchor: float, f: GridFunction, x: float,
                          R_outer: Optional[float] = None, inner_cells: int = 4,
                          return_bound: bool = False, tail: str = "vanishing"):
    """``1/2 int (f(x+z) + f(x-z) - 2 f(x)) kappa(x_anchor, z) |z|^(-1-alpha) dz``.

    ``x`` must be a sample node of ``f``.  ``R_outer`` defaults to the sampled
    span.  Beyond it, ``tail="vanishing"`` assumes f(x +- z) is negligible and
    keeps the ``-2 f(x)`` part exactly (right for densities), while
    ``tail="truncate"`` drops the whole far contribution.  Either way the
    dropped part is at most the returned bound.
    """
    if tail not in ("vanishing", "truncate"):
        raise ValueError(f"unknown tail model {tail!r}")
    span = f.h * len(f.values)
    R = span if R_outer is None else R_outer
    cells = max(int(round(R / f.h)), inner_cells + 2)
    op = frozen_operator(k, [x_anchor], f.h, cells, inner_cells)
    if tail == "truncate":
        op.T = op.T - op.T_far
    fext = f.extended(op.pad + 2)
    i = f.index_of(x) + op.pad + 2
    val = float(op.apply(fext, np.array([i]))[0])
    sup_f = float(np.max(np.abs(f.values)))
    bound = op.tail_bound_factor * sup_f
    return (val, bound) if return_bound else val


def q0(k: JumpKernel, t: float, x: float, y: float, h: Optional[float] = None,
       R_outer: float = 40.0) -> float:
    """Freezing defect ``(L^{kappa(x)} - L^{kappa(y)}) p_y(t, .)`` at ``x - y`` (d=1).

    Real-space route: the frozen density is sampled around x on a grid of
    spacing ``h`` (default ``min(0.02, t^(1/alpha)/40)``) and the operator with
    weight ``kappa(x, z) - kappa(y, z)`` is applied by product integration.
    """
    if k.d != 1:
        raise NotImplementedError("q0 is implemented in d=1")
    if not (0 < t <= 1):
        raise ValueError("t must lie in (0, 1]")
    if x == y:
        return 0.0
    h = h or min(0.02, t ** (1.0 / k.alpha) / 40.0)
    cells = int(math.ceil(R_outer / h))
    op = frozen_operator(k, [x], h, cells, difference_with=[y])
    pad = op.pad + 2
    nodes = x + h * np.arange(-pad, pad + 1)
    p = frozen_density(k, y, t, nodes - y).values[0]
    return float(op.apply(p, np.array([pad]))[0])
