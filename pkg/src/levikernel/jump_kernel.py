"""Jump coefficients kappa(x, z) for stable-like operators.

The operator acting on a test function f is

    L f(x) = 1/2 * int (f(x+z) + f(x-z) - 2 f(x)) kappa(x, z) |z|^(-d-alpha) dz,

so a coefficient is a bounded, positive function of the base point x and the
jump z, even in z and Hoelder continuous in x.  This module holds the
:class:`JumpKernel` container, a few named presets, the matrix-induced
construction used by the SDE ``dX = A(X-) dY``, and a sampling validator.

Coordinates: in d=1 points are plain floats or arrays; in d=2 they are arrays
whose last axis has length 2.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gamma

__all__ = [
    "ZProfile",
    "SeparableTerm",
    "JumpKernel",
    "MatrixField",
    "KernelReport",
    "SingularMatrixError",
    "normalising_constant",
    "stable_symbol_constant",
    "constant_profile",
    "cosine_profile",
    "expression_profile",
    "constant_kernel",
    "reference_kernel",
    "odd_perturbation_kernel",
    "expression_kernel",
    "separable_kernel",
    "kernel_from_config",
    "tanh_matrix_field",
    "constant_matrix_field",
    "diagonal_matrix_field",
    "kappa_from_matrix",
    "validate_kernel",
    "validate_matrix_field",
]


class SingularMatrixError(ValueError):
    """Raised when a matrix field is (numerically) singular at a queried point."""


def normalising_constant(d: int, alpha: float) -> float:
    """Constant c with ``int (1 - cos<xi,z>) c |z|^(-d-alpha) dz = |xi|^alpha``.

    ``c = alpha 2^(alpha-1) Gamma((d+alpha)/2) / (pi^(d/2) Gamma(1-alpha/2))``.
    With kappa identically equal to this value the operator is minus the
    fractional Laplacian with symbol ``|xi|^alpha``.
    """
    _check_alpha(alpha)
    return (alpha * 2.0 ** (alpha - 1) * gamma((d + alpha) / 2)
            / (math.pi ** (d / 2) * gamma(1 - alpha / 2)))


def stable_symbol_constant(alpha: float, d: int = 1) -> float:
    """Symbol coefficient of kappa == 1: ``psi(xi) = C |xi|^alpha``.

    In d=1 this is ``pi / (Gamma(1+alpha) sin(pi alpha / 2))``; in general it is
    ``1 / normalising_constant(d, alpha)``.
    """
    return 1.0 / normalising_constant(d, alpha)


def _check_alpha(alpha):
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"alpha out of (0,2): {alpha}")


# ---------------------------------------------------------------------------
# safe expression evaluation

_ALLOWED_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan,
    "sign": np.sign, "minimum": np.minimum, "maximum": np.maximum,
    "where": np.where, "cosh": np.cosh, "sinh": np.sinh,
}
_ALLOWED_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub,
    ast.UAdd, ast.Compare, ast.Lt, ast.Gt, ast.LtE, ast.GtE, ast.Mod,
)


def compile_expression(expr: str, variables: Sequence[str]) -> Callable:
    """Compile a whitelisted numpy expression into a function of ``variables``.

    Only arithmetic, comparisons, a fixed set of elementwise functions and the
    constants ``pi`` and ``e`` are accepted; anything else raises ValueError.
    """
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax in kernel expression: {type(node).__name__}")
        if isinstance(node, ast.Name):
            if node.id not in _ALLOWED_FUNCS and node.id not in _ALLOWED_CONSTS \
                    and node.id not in variables:
                raise ValueError(f"unknown name {node.id!r} in kernel expression")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
                raise ValueError("only whitelisted functions may be called")
    code = compile(tree, "<kernel-expression>", "eval")
    names = dict(_ALLOWED_FUNCS)
    names.update(_ALLOWED_CONSTS)

    def fn(*args):
        env = dict(names)
        env.update(zip(variables, args))
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape if args else ()
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    return fn


# ---------------------------------------------------------------------------
# z-profiles and separable kernels

@dataclass(frozen=True)
class ZProfile:
    """A function g(z) of the jump (d=1) with its symbol.

    ``symbol(xi, alpha)`` returns ``int (1 - cos xi z) g(z) |z|^(-1-alpha) dz``
    when a closed form exists, otherwise None and callers integrate numerically.
    ``mean_at_infinity`` is the average of g over large |z|; it sets the
    small-frequency behaviour ``psi ~ C_alpha * mean * |xi|^alpha``.
    ``kinks`` lists pairs (omega, a) where the symbol behaves like
    ``C_alpha * a * |xi - omega|^alpha`` plus a smooth function near xi = omega > 0.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    symbol: Optional[Callable[[np.ndarray, float], np.ndarray]]
    mean_at_infinity: float
    value_at_zero: float
    lower: float
    upper: float
    kinks: tuple = ()


def constant_profile() -> ZProfile:
    def sym(xi, alpha):
        return stable_symbol_constant(alpha) * np.abs(xi) ** alpha
    return ZProfile("one", lambda z: np.ones_like(np.asarray(z, dtype=float)),
                    sym, 1.0, 1.0, 1.0, 1.0)


def cosine_profile(omega: float) -> ZProfile:
    """g(z) = cos(omega z); symbol ``(m(xi+w) + m(xi-w))/2 - m(w)`` with m the kappa=1 symbol."""
    w = float(omega)

    def sym(xi, alpha):
        c = stable_symbol_constant(alpha)
        xi = np.abs(np.asarray(xi, dtype=float))
        return c * (0.5 * (np.abs(xi + w) ** alpha + np.abs(xi - w) ** alpha) - abs(w) ** alpha)

    kinks = ((abs(w), 0.5),) if w != 0 else ()
    return ZProfile(f"cos({w:g}z)", lambda z: np.cos(w * np.asarray(z, dtype=float)),
                    sym, 0.0, 1.0, -1.0, 1.0, kinks)


def expression_profile(expr: str) -> ZProfile:
    """Profile from a whitelisted expression in ``z`` (symbol integrated numerically)."""
    f = compile_expression(expr, ("z",))
    zz = np.linspace(200.0, 2200.0, 400001)
    mean = float(np.mean(f(zz)))
    probe = np.concatenate([np.linspace(-50, 50, 20001), zz[::50]])
    vals = f(probe)
    return ZProfile(expr, f, None, mean, float(f(np.array(0.0))),
                    float(vals.min()), float(vals.max()))


@dataclass(frozen=True)
class SeparableTerm:
    """One term ``coef(x) * profile(z)`` of a separable coefficient (d=1)."""

    coef: Callable[[np.ndarray], np.ndarray]
    profile: ZProfile
    coef_expr: str = ""


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpKernel:
    """Coefficient kappa(x, z) with its structural constants.

    Parameters
    ----------
    d : int
        Dimension, 1 or 2.
    alpha : float
        Stability index in (0, 2).
    beta : float
        Hoelder exponent in x, in (0, 1).
    kappa0, kappa1 : float
        Declared lower and upper bounds.
    kappa2 : float
        Declared Hoelder constant.
    func : callable
        ``func(x, z)`` vectorised over broadcastable arrays.
    name : str
        Label used in reports.
    terms : tuple of SeparableTerm, optional
        Exact separable representation ``sum_r c_r(x) g_r(z)`` (d=1).  The
        parametrix solver needs this to build symbols quickly.
    homogeneous : bool
        True when ``kappa(x, lambda z) = kappa(x, z)`` for lambda > 0, e.g.
        constant or matrix-induced coefficients.
    config : dict
        Serialisable description used for hashing and reloading.
    """

    d: int
    alpha: float
    beta: float
    kappa0: float
    kappa1: float
    kappa2: float
    func: Callable = field(repr=False, compare=False)
    name: str = "kernel"
    terms: Optional[tuple] = field(default=None, repr=False, compare=False)
    homogeneous: bool = False
    config: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        _check_alpha(self.alpha)
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta out of (0,1): {self.beta}")
        if not (0.0 < self.kappa0 <= self.kappa1):
            raise ValueError("need 0 < kappa0 <= kappa1")
        if self.kappa2 < 0:
            raise ValueError("kappa2 must be nonnegative")

    def evaluate(self, x, z):
        """kappa(x, z); broadcasts over leading axes."""
        return self.func(np.asarray(x, dtype=float), np.asarray(z, dtype=float))

    __call__ = evaluate

    @property
    def is_constant(self) -> bool:
        return self.kappa2 == 0.0 and self.homogeneous

    @property
    def separable(self) -> bool:
        return self.terms is not None

    def coefficients(self, x) -> np.ndarray:
        """Separable coefficients c_r(x), shape ``x.shape + (R,)``."""
        if self.terms is None:
            raise ValueError(f"kernel {self.name!r} has no separable form")
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(t.coef(x), x.shape) for t in self.terms], axis=-1)

    def jump_intensity(self, x, y):
        """Levy-system intensity ``J(x, y) = kappa(x, y - x) / |y - x|^(d+alpha)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = y - x
        r = np.abs(z) if self.d == 1 else np.linalg.norm(z, axis=-1)
        return self.evaluate(x, z) / r ** (self.d + self.alpha)

    def shifted(self, eps: float) -> "JumpKernel":
        """The coefficient ``kappa + eps`` (used by continuity experiments)."""
        base = self
        terms = None
        if base.terms is not None:
            terms = base.terms + (SeparableTerm(lambda x, e=eps: np.full_like(x, e, dtype=float),
                                                constant_profile(), f"{eps}"),)
        cfg = dict(base.config)
        cfg["shift"] = cfg.get("shift", 0.0) + eps
        return JumpKernel(base.d, base.alpha, base.beta, base.kappa0 + eps, base.kappa1 + eps,
                          base.kappa2, lambda x, z: base.func(x, z) + eps,
                          f"{base.name}+{eps:g}", terms, base.homogeneous, cfg)


# ---------------------------------------------------------------------------
# presets

def constant_kernel(value: float = 1.0, alpha: float = 1.0, d: int = 1,
                    beta: float = 0.5) -> JumpKernel:
    """kappa identically equal to ``value``."""
    value = float(value)
    terms = None
    if d == 1:
        terms = (SeparableTerm(lambda x, v=value: np.full_like(np.asarray(x, float), v),
                               constant_profile(), f"{value}"),)

    def f(x, z):
        shape = np.broadcast(x[..., 0] if d == 2 else x, z[..., 0] if d == 2 else z).shape
        return np.full(shape, value)

    return JumpKernel(d, alpha, beta, value, value, 0.0, f, f"constant({value:g})", terms,
                      True, {"preset": "constant", "value": value, "alpha": alpha, "d": d,
                             "beta": beta})


def reference_kernel(alpha: float = 1.0, beta: float = 0.5, amplitude: float = 0.4) -> JumpKernel:
    """``kappa(x, z) = 1 + a sin(x) cos(z)^2`` in d=1 (a = 0.4 by default).

    Since ``cos^2 z = (1 + cos 2z)/2`` the coefficient splits into the two terms
    ``(1 + a/2 sin x) * 1 + (a/2 sin x) * cos(2z)``.  Bounds are ``1 -+ a``; the
    Hoelder constant uses ``|sin x - sin y| <= min(|x-y|, 2) <= 2^(1-beta) |x-y|^beta``.
    """
    a = float(amplitude)

    def f(x, z):
        return 1.0 + a * np.sin(x) * np.cos(z) ** 2

    terms = (
        SeparableTerm(lambda x: 1.0 + 0.5 * a * np.sin(x), constant_profile(), f"1+{a / 2}*sin(x)"),
        SeparableTerm(lambda x: 0.5 * a * np.sin(x), cosine_profile(2.0), f"{a / 2}*sin(x)"),
    )
    return JumpKernel(1, alpha, beta, 1.0 - a, 1.0 + a, a * 2.0 ** (1.0 - beta), f,
                      "reference", terms, False,
                      {"preset": "reference", "alpha": alpha, "beta": beta, "amplitude": a})


def odd_perturbation_kernel(alpha: float = 1.0) -> JumpKernel:
    """``1 + 0.5 sign(z)``: violates the symmetry requirement on purpose."""
    def f(x, z):
        return 1.0 + 0.5 * np.sign(z) + 0.0 * x
    return JumpKernel(1, alpha, 0.5, 0.5, 1.5, 0.0, f, "odd-perturbation", None, False,
                      {"preset": "odd-perturbation", "alpha": alpha})


def expression_kernel(expr: str, alpha: float, beta: float, kappa0: float, kappa1: float,
                      kappa2: float, d: int = 1) -> JumpKernel:
    """Kernel from a whitelisted expression.

    Variables are ``x, z`` in d=1 and ``x1, x2, z1, z2`` (plus ``r = |z|``) in d=2.
    """
    if d == 1:
        g = compile_expression(expr, ("x", "z"))

        def f(x, z):
            return g(x, z)
    else:
        g = compile_expression(expr, ("x1", "x2", "z1", "z2", "r"))

        def f(x, z):
            return g(x[..., 0], x[..., 1], z[..., 0], z[..., 1], np.linalg.norm(z, axis=-1))
    return JumpKernel(d, alpha, beta, kappa0, kappa1, kappa2, f, expr, None, False,
                      {"expression": expr, "alpha": alpha, "beta": beta, "kappa0": kappa0,
                       "kappa1": kappa1, "kappa2": kappa2, "d": d})


def separable_kernel(terms: Sequence[dict], alpha: float, beta: float, kappa0: float,
                     kappa1: float, kappa2: float) -> JumpKernel:
    """d=1 kernel ``sum_r c_r(x) g_r(z)`` from ``[{"x": expr, "z": expr}, ...]``.

    z-expressions ``"1"`` and ``"cos(<w>*z)"`` get closed-form symbols.
    """
    built = []
    for t in terms:
        cx = compile_expression(str(t["x"]), ("x",))
        zs = str(t["z"]).replace(" ", "")
        prof = _known_profile(zs) or expression_profile(zs)
        built.append(SeparableTerm(cx, prof, str(t["x"])))
    built = tuple(built)

    def f(x, z):
        return sum(t.coef(x) * t.profile.func(z) for t in built)

    return JumpKernel(1, alpha, beta, kappa0, kappa1, kappa2, f, "separable", built, False,
                      {"terms": [dict(t) for t in terms], "alpha": alpha, "beta": beta,
                       "kappa0": kappa0, "kappa1": kappa1, "kappa2": kappa2, "d": 1})


def _known_profile(zs: str) -> Optional[ZProfile]:
    if zs in ("1", "1.0"):
        return constant_profile()
    if zs.startswith("cos(") and zs.endswith("*z)"):
        try:
            return cosine_profile(float(zs[4:-3]))
        except ValueError:
            return None
    return None


# ---------------------------------------------------------------------------
# matrix fields

@dataclass(frozen=True)
class MatrixField:
    """Matrix-valued coefficient A(x) of the SDE ``dX = A(X-) dY``.

    ``A(x)`` returns shape ``x.shape[:-1] + (d, d)`` in d=2, and an array of the
    same shape as ``x`` (the scalar a(x)) in d=1.
    """

    d: int
    A: Callable = field(repr=False, compare=False)
    lambda0: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 0.0
    beta: float = 0.5
    name: str = "matrix"
    config: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        return self.A(np.asarray(x, dtype=float))

    def matrix(self, x) -> np.ndarray:
        """A(x) always as a (..., d, d) array."""
        a = self(x)
        if self.d == 1:
            return np.asarray(a, dtype=float)[..., None, None]
        return np.asarray(a, dtype=float)


def constant_matrix_field(a, d: int = 1) -> MatrixField:
    if d == 1:
        a = float(a)
        return MatrixField(1, lambda x: np.full_like(x, a, dtype=float), a, a, 0.0, 0.5,
                           f"constant({a:g})", {"preset": "constant-matrix", "a": a, "d": 1})
    M = np.asarray(a, dtype=float)
    sv = np.linalg.svd(M, compute_uv=False)
    return MatrixField(2, lambda x: np.broadcast_to(M, x.shape[:-1] + (2, 2)).copy(),
                       float(sv.min()), float(sv.max()), 0.0, 0.5, "constant-matrix",
                       {"preset": "constant-matrix", "a": M.tolist(), "d": 2})


def diagonal_matrix_field(diag: Sequence[float]) -> MatrixField:
    return constant_matrix_field(np.diag(np.asarray(diag, dtype=float)), d=2)


def tanh_matrix_field(amplitude: float = 0.3, d: int = 1) -> MatrixField:
    """``A(x) = (1 + a tanh(x_1)) I``; ellipticity ``[1-a, 1+a]``, Lipschitz constant a."""
    a = float(amplitude)
    if d == 1:
        fn = lambda x: 1.0 + a * np.tanh(x)
    else:
        fn = lambda x: (1.0 + a * np.tanh(x[..., 0]))[..., None, None] * np.eye(2)
    # |tanh x - tanh y| <= min(|x-y|, 2) <= 2^(1-beta) |x-y|^beta
    return MatrixField(d, fn, 1.0 - a, 1.0 + a, a * 2.0 ** 0.5, 0.5, f"1+{a:g}tanh",
                       {"preset": "tanh-matrix", "amplitude": a, "d": d})


def kappa_from_matrix(A: MatrixField, alpha: float, eps: float = 1e-12) -> JumpKernel:
    """Coefficient of the process ``dX = A(X-) dY`` with Y isotropic alpha-stable.

    ``kappa(x, z) = c / |det A(x)| * (|z| / |A(x)^-1 z|)^(d+alpha)`` with c the
    normalising constant of :func:`normalising_constant`.  In d=1 this is
    ``c * a(x)^alpha``, independent of z.

    Bounds follow from singular values in ``[lambda0, lambda1]``:
    ``c lambda0^(d+alpha) / lambda1^d <= kappa <= c lambda1^(d+alpha) / lambda0^d``.
    """
    d = A.d
    c = normalising_constant(d, alpha)
    lam0, lam1 = A.lambda0, A.lambda1
    k0 = c * lam0 ** (d + alpha) / lam1 ** d
    k1 = c * lam1 ** (d + alpha) / lam0 ** d
    # derivative of log kappa along a segment of admissible matrices is at most
    # (2d + alpha) |A^-1| |dA| with |dA| <= d * max_ij |dA_ij|
    k2 = k1 * (2 * d + alpha) * d * A.lambda2 / lam0
    cfg = {"matrix": dict(A.config), "alpha": alpha}

    if d == 1:
        def f(x, z):
            a = np.asarray(A(x), dtype=float)
            if np.any(np.abs(a) < eps):
                raise SingularMatrixError("|det A(x)| below epsilon")
            out = c * np.abs(a) ** alpha
            return np.broadcast_to(out, np.broadcast(out, z).shape).copy()

        terms = (SeparableTerm(lambda x: c * np.abs(np.asarray(A(x), dtype=float)) ** alpha,
                               constant_profile(), f"c*a(x)^{alpha}"),)
        return JumpKernel(1, alpha, min(A.beta, 0.999), k0, k1, k2, f,
                          f"matrix[{A.name}]", terms, True, cfg)

    def f2(x, z):
        M = A.matrix(x)
        det = np.linalg.det(M)
        if np.any(np.abs(det) < eps):
            raise SingularMatrixError("|det A(x)| below epsilon")
        M, z = np.broadcast_arrays(M, np.asarray(z, dtype=float)[..., None, :])
        z = z[..., 0, :]
        w = np.linalg.solve(M, z[..., None])[..., 0]
        nz = np.linalg.norm(z, axis=-1)
        nw = np.linalg.norm(w, axis=-1)
        det = np.linalg.det(M)
        return c / np.abs(det) * (nz / nw) ** (d + alpha)

    return JumpKernel(2, alpha, min(A.beta, 0.999), k0, k1, k2, f2, f"matrix[{A.name}]", None,
                      True, cfg)


def kernel_from_config(cfg: dict) -> JumpKernel:
    """Build a kernel from a config block (see the README for the schema)."""
    cfg = dict(cfg)
    alpha = float(cfg.get("alpha", 1.0))
    _check_alpha(alpha)
    d = int(cfg.get("dimension", cfg.get("d", 1)))
    preset = cfg.get("preset")
    if preset == "constant":
        return constant_kernel(float(cfg.get("value", 1.0)), alpha, d, float(cfg.get("beta", 0.5)))
    if preset == "reference":
        return reference_kernel(alpha, float(cfg.get("beta", 0.5)), float(cfg.get("amplitude", 0.4)))
    if preset == "odd-perturbation":
        return odd_perturbation_kernel(alpha)
    if preset in ("tanh-matrix", "constant-matrix"):
        if preset == "tanh-matrix":
            A = tanh_matrix_field(float(cfg.get("amplitude", 0.3)), d)
        else:
            A = constant_matrix_field(cfg.get("a", 1.0), d)
        return kappa_from_matrix(A, alpha)
    if "terms" in cfg:
        return separable_kernel(cfg["terms"], alpha, float(cfg["beta"]), float(cfg["kappa0"]),
                                float(cfg["kappa1"]), float(cfg["kappa2"]))
    if "expression" in cfg:
        return expression_kernel(cfg["expression"], alpha, float(cfg["beta"]),
                                 float(cfg["kappa0"]), float(cfg["kappa1"]),
                                 float(cfg["kappa2"]), d)
    raise ValueError(f"unknown kernel block: {cfg}")


# ---------------------------------------------------------------------------
# validation

@dataclass
class KernelReport:
    """Sampling report for a kernel; violations are listed, never raised."""

    kappa_min: float
    kappa_max: float
    holder_ratio: float
    symmetry_defect: float
    violations: list
    sample_count: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {"kappa_min": self.kappa_min, "kappa_max": self.kappa_max,
                "holder_ratio": self.holder_ratio, "symmetry_defect": self.symmetry_defect,
                "violations": list(self.violations), "sample_count": self.sample_count}


def _sample_points(rng, n, d, scale):
    if d == 1:
        return rng.uniform(-scale, scale, n)
    return rng.uniform(-scale, scale, (n, d))


def _sample_jumps(rng, n, d):
    r = 10.0 ** rng.uniform(-3, 3, n)
    if d == 1:
        return r * rng.choice([-1.0, 1.0], n)
    th = rng.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def validate_kernel(k: JumpKernel, sample_count: int = 2000, rng_seed: int = 0,
                    extent: float = 10.0) -> KernelReport:
    """Sample kappa and compare with its declared structural constants.

    Bounds and the Hoelder constant are exact inequalities, so any excess is
    a violation.  Hoelder pairs use distances log-spaced in [1e-3, 2].
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    x = _sample_points(rng, sample_count, k.d, extent)
    z = _sample_jumps(rng, sample_count, k.d)
    v = k.evaluate(x, z)
    vm = k.evaluate(x, -z)
    sym = float(np.max(np.abs(v - vm)))
    dist = np.logspace(-3, np.log10(2.0), sample_count)
    if k.d == 1:
        y = x + dist * rng.choice([-1.0, 1.0], sample_count)
    else:
        th = rng.uniform(0, 2 * np.pi, sample_count)
        y = x + dist[:, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)
    vy = k.evaluate(y, z)
    ratio = float(np.max(np.abs(v - vy) / dist ** k.beta))
    violations = []
    if v.min() < k.kappa0:
        violations.append(f"lower bound: min {v.min():.6g} < kappa0 {k.kappa0:.6g}")
    if v.max() > k.kappa1:
        violations.append(f"upper bound: max {v.max():.6g} > kappa1 {k.kappa1:.6g}")
    if ratio > k.kappa2:
        violations.append(f"hoelder: ratio {ratio:.6g} > kappa2 {k.kappa2:.6g}")
    if sym > 0:
        violations.append(f"symmetry: max |kappa(x,z)-kappa(x,-z)| = {sym:.6g}")
    return KernelReport(float(v.min()), float(v.max()), ratio, sym, violations, sample_count)


def validate_matrix_field(A: MatrixField, sample_count: int = 1000, rng_seed: int = 0,
                          extent: float = 10.0) -> dict:
    """Check ellipticity (symmetric-part eigenvalues) and entrywise Hoelder bounds."""
    rng = np.random.default_rng(rng_seed)
    x = _sample_points(rng, sample_count, A.d, extent)
    M = A.matrix(x)
    sym_part = 0.5 * (M + np.swapaxes(M, -1, -2))
    eig = np.linalg.eigvalsh(sym_part)
    dist = np.logspace(-3, np.log10(2.0), sample_count)
    if A.d == 1:
        y = x + dist
    else:
        y = x + dist[:, None] * np.array([1.0, 0.0])
    dM = np.abs(A.matrix(y) - M).reshape(sample_count, -1).max(axis=1)
    ratio = float(np.max(dM / dist ** A.beta))
    violations = []
    if eig.min() < A.lambda0:
        violations.append(f"ellipticity: min eigenvalue {eig.min():.6g} < {A.lambda0}")
    if eig.max() > A.lambda1:
        violations.append(f"ellipticity: max eigenvalue {eig.max():.6g} > {A.lambda1}")
    if ratio > A.lambda2:
        violations.append(f"hoelder: ratio {ratio:.6g} > {A.lambda2}")
    return {"eig_min": float(eig.min()), "eig_max": float(eig.max()), "holder_ratio": ratio,
            "violations": violations}
