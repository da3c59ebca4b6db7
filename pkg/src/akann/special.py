"""Incomplete Beta, Gamma ratios and the expected-reference-cosine integral."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Tuple

import numpy as np

from .linalg import SubspaceLayout

_FPMIN = 1e-300
_EPS = 1e-15
_MAXIT = 5000


class QuadratureError(RuntimeError):
    """Raised when an integral fails to reach its tolerance."""


@dataclass(frozen=True)
class BetaParams:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Beta parameters must be positive, got a={self.a}, b={self.b}")

    @classmethod
    def sphere(cls, d: int) -> "BetaParams":
        """Beta((d-2)/2, (d-2)/2): law of (W+1)/2, W the cosine of two uniform directions in R^{d-1}."""
        return cls((d - 2) / 2.0, (d - 2) / 2.0)


@dataclass(frozen=True)
class QuadratureSpec:
    method: str = "gauss-legendre"
    rel_tol: float = 1e-9
    max_subdivisions: int = 1 << 14

    def __post_init__(self):
        if self.method not in ("gauss-legendre", "adaptive-simpson"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if not (0 < self.rel_tol <= 1e-3):
            raise ValueError(f"rel_tol must lie in (0, 1e-3], got {self.rel_tol}")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


class QuadResult(NamedTuple):
    value: float
    error: float
    evaluations: int


def _fix(x):
    return np.where(np.abs(x) < _FPMIN, _FPMIN, x)


def _betacf(a, b, x):
    """Modified Lentz evaluation of the incomplete-Beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 / _fix(1.0 - qab * x / qap)
    h = d.copy()
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 / _fix(1.0 + aa * d)
        c = _fix(1.0 + aa / c)
        h = h * d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 / _fix(1.0 + aa * d)
        c = _fix(1.0 + aa / c)
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _EPS):
            return h
    raise ArithmeticError(f"incomplete Beta continued fraction did not converge (a={a}, b={b})")


def _lbeta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def reg_inc_beta(t, a: float, b: float):
    """Regularized incomplete Beta function I_t(a, b).

    ``t`` may be a scalar or an array; ``a`` and ``b`` are positive scalars.
    Uses the continued fraction directly below the mean-ish switch point
    (a+1)/(a+b+2) and the reflection I_t(a,b) = 1 - I_{1-t}(b,a) above it.
    """
    if not (a > 0 and b > 0):
        raise ValueError(f"Beta parameters must be positive, got a={a}, b={b}")
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(~np.isfinite(t)) or np.any((t < 0) | (t > 1)):
        raise ValueError("reg_inc_beta argument outside [0, 1]")
    out = np.empty_like(t)
    out[t == 0] = 0.0
    out[t == 1] = 1.0
    inner = (t > 0) & (t < 1)
    lb = _lbeta(a, b)
    switch = (a + 1.0) / (a + b + 2.0)
    lo = inner & (t < switch)
    hi = inner & ~(t < switch)
    if lo.any():
        x = t[lo]
        front = np.exp(a * np.log(x) + b * np.log1p(-x) - lb)
        out[lo] = front * _betacf(a, b, x) / a
    if hi.any():
        x = 1.0 - t[hi]
        front = np.exp(b * np.log(x) + a * np.log1p(-x) - lb)
        out[hi] = 1.0 - front * _betacf(b, a, x) / b
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def log_gamma_ratio(d: int, L: int) -> float:
    """E[<v, r_L(v)>] for uniform v on S^{d-1}, r_L the level-normalized copy of v.

    Equals sqrt(L) G((d+L)/2L) G(d/2) / (G(d/2L) G((d+1)/2)), evaluated in
    log space.
    """
    if L < 1 or d < 1 or d % L:
        raise ValueError(f"d={d} must be a positive multiple of L={L}")
    if L == 1:
        return 1.0
    s = (math.lgamma((d + L) / (2 * L)) + math.lgamma(d / 2)
         - math.lgamma(d / (2 * L)) - math.lgamma((d + 1) / 2))
    return math.sqrt(L) * math.exp(s)


def sphere_cosine_const(d_sub: int) -> float:
    return math.exp(math.lgamma(d_sub / 2) - math.lgamma((d_sub - 1) / 2)) / math.sqrt(math.pi)


def sphere_cosine_pdf(y, d_sub: int):
    """Density of <u, v> for fixed v and uniform u on S^{d'-1}."""
    if d_sub < 3:
        raise ValueError(f"d' must be at least 3, got {d_sub}")
    y = np.asarray(y, dtype=np.float64)
    if np.any((y < -1) | (y > 1)):
        raise ValueError("cosine outside [-1, 1]")
    c = sphere_cosine_const(d_sub)
    out = c * np.power(1.0 - y * y, (d_sub - 3) / 2.0)
    return float(out) if out.ndim == 0 else out


def sphere_cosine_cdf(y, d_sub: int):
    a = (d_sub - 1) / 2.0
    return reg_inc_beta(np.clip((1.0 + np.asarray(y, dtype=np.float64)) / 2.0, 0.0, 1.0), a, a)


def _log_sphere_cdf(y: np.ndarray, d_sub: int) -> np.ndarray:
    """log P[<u,v> <= y]; log1p of the upper tail where that is the accurate side."""
    a = (d_sub - 1) / 2.0
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    neg = y <= 0
    with np.errstate(divide="ignore"):
        if neg.any():
            out[neg] = np.log(reg_inc_beta(np.clip((1.0 + y[neg]) / 2.0, 0.0, 1.0), a, a))
        if (~neg).any():
            tail = reg_inc_beta(np.clip((1.0 - y[~neg]) / 2.0, 0.0, 1.0), a, a)
            out[~neg] = np.log1p(-tail)
    return out


def _gl_composite(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                  panels: int, nodes: np.ndarray, weights: np.ndarray) -> Tuple[float, float]:
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    vals = g(pts).reshape(panels, -1)
    w = half[:, None] * weights[None, :]
    return float(np.sum(vals * w)), float(np.sum(np.abs(vals) * w))


def integrate(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
              quad: QuadratureSpec = QuadratureSpec()) -> QuadResult:
    """Integrate a vectorized function on [lo, hi] to ``quad.rel_tol``.

    The tolerance is relative to the integral of |g| so integrals that are
    zero by symmetry still terminate.
    """
    if quad.method == "gauss-legendre":
        nodes, weights = np.polynomial.legendre.leggauss(20)
        panels = 4
        prev, _ = _gl_composite(g, lo, hi, panels, nodes, weights)
        evals = panels * 20
        while panels * 2 <= quad.max_subdivisions:
            panels *= 2
            cur, scale = _gl_composite(g, lo, hi, panels, nodes, weights)
            evals += panels * 20
            err = abs(cur - prev)
            if err <= quad.rel_tol * max(scale, 1e-300):
                return QuadResult(cur, err, evals)
            prev = cur
        raise QuadratureError(
            f"Gauss-Legendre did not reach rel_tol={quad.rel_tol} within {quad.max_subdivisions} panels")
    return _adaptive_simpson(g, lo, hi, quad)


def _adaptive_simpson(g, lo, hi, quad: QuadratureSpec) -> QuadResult:
    def f(x):
        return float(np.asarray(g(np.array([x])))[0])

    # seed with a uniform grid: a 3-point start misses narrow peaks entirely
    xs = np.linspace(lo, hi, 129)
    ys = np.asarray(g(xs), dtype=np.float64)
    scale = float(np.trapezoid(np.abs(ys), xs))
    tol = quad.rel_tol * max(scale, 1e-300)
    stack = []
    for i in range(0, 128, 2):
        a, b = xs[i], xs[i + 2]
        whole = (b - a) / 6 * (ys[i] + 4 * ys[i + 1] + ys[i + 2])
        stack.append((a, b, ys[i], ys[i + 1], ys[i + 2], whole, tol / 64))
    total, err_total, evals, splits = 0.0, 0.0, len(xs), 0
    while stack:
        a, b, fa, fm, fb, whole, eps = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        evals += 2
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        delta = left + right - whole
        if abs(delta) <= 15 * eps or b - a < 1e-12:
            total += left + right + delta / 15
            err_total += abs(delta) / 15
            continue
        splits += 1
        if splits > quad.max_subdivisions:
            raise QuadratureError(
                f"adaptive Simpson exceeded {quad.max_subdivisions} subdivisions")
        stack.append((a, m, fa, flm, fm, left, eps / 2))
        stack.append((m, b, fm, frm, fb, right, eps / 2))
    return QuadResult(total, err_total, evals)


def expected_max_cosine(m: int, d_sub: int, quad: QuadratureSpec = QuadratureSpec()) -> QuadResult:
    """E[max of m i.i.d. cosines to a fixed direction] on S^{d'-1}.

    Integrates m y F(y)^{m-1} f(y) over [-1, 1] after substituting
    y = sin(s), which turns the density into c cos(s)^{d'-2} and removes the
    endpoint singularities. F^{m-1} is formed in log space.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if d_sub < 3:
        raise ValueError(f"d' must be at least 3, got {d_sub}")
    c = sphere_cosine_const(d_sub)

    def g(s):
        y = np.sin(s)
        cos_s = np.cos(s)
        dens = c * np.power(np.maximum(cos_s, 0.0), d_sub - 2)
        if m == 1:
            power = np.ones_like(y)
        else:
            power = np.exp((m - 1) * _log_sphere_cdf(y, d_sub))
        return m * y * power * dens

    return integrate(g, -math.pi / 2, math.pi / 2, quad)


def refangle_lower_bound(m: int, layout: SubspaceLayout,
                         quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Expected reference cosine of m random codewords per level over L levels.

    This is the exact mean for purely random codewords and a strict lower
    bound for the antipodal construction.
    """
    if layout.d_sub < 3:
        raise ValueError(f"d' must be at least 3, got {layout.d_sub}")
    res = expected_max_cosine(m, layout.d_sub, quad)
    return log_gamma_ratio(layout.d, layout.L) * res.value
