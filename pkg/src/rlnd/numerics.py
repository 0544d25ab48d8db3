"""Special functions and small numerical-analysis kernels.

Everything here is a pure function of its arguments.  The standard normal
CDF is evaluated through ``math.erfc`` with a compensated argument so that
the adaptive quadrature in :func:`integrate` stays an independent check of it.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

__all__ = [
    "ConvergenceError",
    "NoSignChangeError",
    "QuadratureSpec",
    "RootBracket",
    "NelderMeadResult",
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_pdf",
    "std_normal_ppf",
    "regularized_gamma_q",
    "chi_square_sf",
    "integrate",
    "find_root",
    "nelder_mead",
]


class ConvergenceError(RuntimeError):
    """An iterative method ran out of budget before meeting its tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class NoSignChangeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be strictly positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class RootBracket:
    lo: float
    hi: float
    tol: float = 1e-12

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty bracket [{self.lo}, {self.hi}]")
        if not self.tol > 0:
            raise ValueError("bracket tolerance must be positive")


# ---------------------------------------------------------------------------
# normal distribution

_SQRT1_2 = 0.7071067811865476
_SQRT1_2_LO = -4.833646656726457e-17  # 1/sqrt(2) - _SQRT1_2
_TWO_OVER_SQRTPI = 1.1283791670955126
_INV_SQRT_2PI = 0.3989422804014327
_SPLIT = 134217729.0  # 2**27 + 1


def _two_prod(a, b):
    # Dekker: a*b == p + err exactly
    p = a * b
    t = _SPLIT * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLIT * b
    bh = t - (t - b)
    bl = b - bh
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def _erfc_scaled_arg(z):
    """0.5 * erfc(-z / sqrt(2)) with the rounding of -z/sqrt(2) corrected."""
    if math.isnan(z):
        return math.nan
    if abs(z) > 64.0:
        # saturated; also keeps the splitting in _two_prod from overflowing
        return 1.0 if z > 0 else 0.0
    x, e = _two_prod(-z, _SQRT1_2)
    e -= z * _SQRT1_2_LO
    return 0.5 * (math.erfc(x) - e * _TWO_OVER_SQRTPI * math.exp(-x * x))


_phi_ufunc = np.frompyfunc(_erfc_scaled_arg, 1, 1)


def std_normal_cdf(z):
    """Standard normal CDF.

    Relative error stays below 1e-15 down to z = -37, where the result
    reaches the subnormal range.  Accepts scalars or arrays.
    """
    if np.ndim(z) == 0:
        return _erfc_scaled_arg(float(z))
    return _phi_ufunc(np.asarray(z, dtype=float)).astype(float)


def std_normal_sf(z):
    """Upper tail 1 - Phi(z), computed without cancellation."""
    if np.ndim(z) == 0:
        return _erfc_scaled_arg(-float(z))
    return _phi_ufunc(-np.asarray(z, dtype=float)).astype(float)


def std_normal_pdf(z):
    z = np.asarray(z, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return float(out) if out.ndim == 0 else out


def std_normal_ppf(p):
    """Inverse of :func:`std_normal_cdf` (``scipy.special.ndtri``)."""
    out = ndtri(np.asarray(p, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# chi-square survival function

_GAMMA_EPS = 1e-16
_GAMMA_CF_EPS = 4.0 * np.finfo(float).eps  # |delta - 1| can never drop below one ulp
_GAMMA_TINY = 1e-300
_GAMMA_MAXITER = 10000


def _gamma_series_p(a, x, log_prefix):
    # P(a, x) = x^a e^-x / Gamma(a) * sum_n x^n / (a (a+1) ... (a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_GAMMA_MAXITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            return total * math.exp(log_prefix)
    raise ConvergenceError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cf_q(a, x, log_prefix):
    # modified Lentz evaluation of the Legendre continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _GAMMA_TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAXITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _GAMMA_TINY:
            d = _GAMMA_TINY
        c = b + an / c
        if abs(c) < _GAMMA_TINY:
            c = _GAMMA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= _GAMMA_CF_EPS:
            return h * math.exp(log_prefix)
    raise ConvergenceError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def regularized_gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise ValueError("shape parameter must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    log_prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        if log_prefix < -745.0:
            return 1.0
        return 1.0 - _gamma_series_p(a, x, log_prefix)
    if log_prefix < -745.0:
        return 0.0  # below the smallest subnormal
    return _gamma_cf_q(a, x, log_prefix)


def chi_square_sf(x: float, df: int) -> float:
    """P(chi2_df > x)."""
    if df < 1 or int(df) != df:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df}")
    if not x >= 0:
        raise ValueError(f"chi-square statistic must be >= 0, got {x}")
    return regularized_gamma_q(0.5 * df, 0.5 * x)


# ---------------------------------------------------------------------------
# adaptive Gauss-Kronrod quadrature

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD_W = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss points are the odd-indexed Kronrod points
_GAUSS_W = np.zeros(15)
_GAUSS_W[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


def _vector_call(f, x):
    try:
        y = np.asarray(f(x), dtype=float)
        if y.shape == x.shape:
            return y
    except (TypeError, ValueError):
        pass
    return np.array([f(float(xi)) for xi in x], dtype=float)


def _gk15(g, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    y = g(mid + half * _NODES)
    kronrod = half * np.dot(_KRONROD_W, y)
    gauss = half * np.dot(_GAUSS_W, y)
    return kronrod, abs(kronrod - gauss)


def _segments(f, lo, hi, cuts):
    """Split (lo, hi) at cuts; map infinite pieces onto [0, 1)."""
    knots = [lo, *cuts, hi]
    out = []
    for a, b in zip(knots[:-1], knots[1:]):
        if math.isinf(a):
            def g(t, b=b):
                s = 1.0 - t
                return _vector_call(f, b - t / s) / (s * s)
            out.append((g, 0.0, 1.0))
        elif math.isinf(b):
            def g(t, a=a):
                s = 1.0 - t
                return _vector_call(f, a + t / s) / (s * s)
            out.append((g, 0.0, 1.0))
        else:
            out.append((lambda x: _vector_call(f, x), a, b))
    return out


def integrate(f: Callable, lo: float, hi: float, spec: Optional[QuadratureSpec] = None,
              points: Sequence[float] = ()) -> float:
    """Globally adaptive 15-point Gauss-Kronrod quadrature of ``f`` over (lo, hi).

    Infinite endpoints are handled with ``x = b - t/(1-t)`` (and its mirror).
    ``points`` are optional interior break points where ``f`` has structure
    (a narrow peak, a kink); they are not required for correctness.  ``f``
    may be vectorised; scalar-only callables are detected and looped over.
    """
    spec = spec or QuadratureSpec()
    lo, hi = float(lo), float(hi)
    if lo == hi:
        return 0.0
    if lo > hi:
        return -integrate(f, hi, lo, spec, points)
    cuts = sorted({float(p) for p in points if lo < p < hi and math.isfinite(p)})
    if not cuts and math.isinf(lo) and math.isinf(hi):
        cuts = [0.0]

    heap = []
    total = 0.0
    total_err = 0.0
    frozen_err = 0.0
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        for idx, (g, a, b) in enumerate(_segments(f, lo, hi, cuts)):
            est, err = _gk15(g, a, b)
            total += est
            total_err += err
            heapq.heappush(heap, (-err, idx, a, b, est, g))
        counter = len(heap)

        subdivisions = 0
        while total_err > max(spec.abs_tol, spec.rel_tol * abs(total)):
            if not heap:
                break
            if subdivisions >= spec.max_subdivisions:
                raise ConvergenceError(
                    f"quadrature did not converge in {spec.max_subdivisions} subdivisions "
                    f"(estimate {total!r}, error {total_err:.3g})", total, total_err)
            neg_err, _, a, b, est, g = heapq.heappop(heap)
            mid = 0.5 * (a + b)
            if not (a < mid < b):
                # interval at floating-point resolution; cannot be refined further
                frozen_err += -neg_err
                continue
            subdivisions += 1
            e1, r1 = _gk15(g, a, mid)
            e2, r2 = _gk15(g, mid, b)
            total += e1 + e2 - est
            total_err += r1 + r2 + neg_err
            heapq.heappush(heap, (-r1, counter, a, mid, e1, g))
            heapq.heappush(heap, (-r2, counter + 1, mid, b, e2, g))
            counter += 2

    if not math.isfinite(total):
        raise ConvergenceError("quadrature produced a non-finite value", total, total_err)
    if total_err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        raise ConvergenceError(
            f"quadrature stalled at floating-point resolution (error {total_err:.3g})",
            total, total_err)
    return float(total)


# ---------------------------------------------------------------------------
# root finding


def find_root(f: Callable[[float], float], bracket: RootBracket) -> float:
    """Bracketed root of ``f`` (Brent's method, bisection safeguarded)."""
    fa = f(bracket.lo)
    fb = f(bracket.hi)
    if fa == 0:
        return bracket.lo
    if fb == 0:
        return bracket.hi
    if np.sign(fa) == np.sign(fb):
        raise NoSignChangeError(
            f"f does not change sign on [{bracket.lo}, {bracket.hi}] "
            f"(f(lo)={fa!r}, f(hi)={fb!r})")
    return float(brentq(f, bracket.lo, bracket.hi, xtol=bracket.tol, maxiter=500))


# ---------------------------------------------------------------------------
# Nelder-Mead with box projection


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    converged: bool
    nit: int
    nfev: int

    def __iter__(self):
        # allows ``x, fx = nelder_mead(...)``
        return iter((self.x, self.fun))


def nelder_mead(objective: Callable[[np.ndarray], float], x0, bounds=None, max_iter: int = 1000,
                xatol: float = 1e-8, fatol: float = 1e-12, initial_step=None) -> NelderMeadResult:
    """Minimise ``objective`` with the Nelder-Mead simplex method.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs (``None`` entries mean
    unbounded); every trial point is projected onto the box.  When
    ``max_iter`` is exhausted the best point so far is returned with
    ``converged=False``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    dim = x0.size
    if bounds is None:
        lo = np.full(dim, -np.inf)
        hi = np.full(dim, np.inf)
    else:
        bounds = list(bounds)
        if len(bounds) != dim:
            raise ValueError("bounds must have one (lo, hi) pair per coordinate")
        lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds], dtype=float)
        hi = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
        if np.any(lo > hi):
            raise ValueError("empty box constraint")
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("x0 lies outside the bounds")

    def project(x):
        return np.clip(x, lo, hi)

    nfev = 0

    def fun(x):
        nonlocal nfev
        nfev += 1
        return float(objective(x))

    if initial_step is None:
        width = hi - lo
        step = np.where(np.isfinite(width), 0.05 * width, np.where(x0 != 0, 0.05 * np.abs(x0), 0.00025))
    else:
        step = np.broadcast_to(np.asarray(initial_step, dtype=float), (dim,)).copy()

    simplex = [x0.copy()]
    for i in range(dim):
        v = x0.copy()
        v[i] = x0[i] + step[i] if x0[i] + step[i] <= hi[i] else x0[i] - step[i]
        simplex.append(project(v))
    simplex = np.array(simplex)
    fvals = np.array([fun(v) for v in simplex])
    if not np.isfinite(fvals[0]):
        raise ValueError("objective is not finite at x0")

    alpha, gamma, rho, shrink = 1.0, 2.0, 0.5, 0.5
    converged = False
    nit = 0
    while nit < max_iter:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if (np.max(np.abs(simplex[1:] - simplex[0])) <= xatol
                and np.max(np.abs(fvals[1:] - fvals[0])) <= fatol):
            converged = True
            break
        nit += 1
        centroid = simplex[:-1].mean(axis=0)
        xr = project(centroid + alpha * (centroid - simplex[-1]))
        fr = fun(xr)
        if fr < fvals[0]:
            xe = project(centroid + gamma * (xr - centroid))
            fe = fun(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = project(centroid + rho * (xr - centroid))
            fc = fun(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = project(centroid + rho * (simplex[-1] - centroid))
            fc = fun(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        for i in range(1, dim + 1):
            simplex[i] = project(simplex[0] + shrink * (simplex[i] - simplex[0]))
            fvals[i] = fun(simplex[i])

    best = int(np.argmin(fvals))
    return NelderMeadResult(simplex[best].copy(), float(fvals[best]), converged, nit, nfev)
