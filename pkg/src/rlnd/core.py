"""The random limit normal distribution N(mu, sigma^2, K, c).

The CDF is ``F(y) = Phi((y - mu) / (sigma * h(y - mu)))``: a normal CDF whose
scale is re-evaluated at every point through the positive function ``h``.
Two families of ``h`` are supported:

* :class:`LinearH` -- ``h(t) = k_neg*t + c`` for ``t <= 0`` and ``k_pos*t + c``
  for ``t > 0`` (``k_neg <= 0 <= k_pos``).  With non-zero slopes the CDF
  saturates below one and above zero, so the distribution is defective and
  the missing mass is reported by :func:`mass_report`.
* :class:`TabulatedH` -- piecewise-linear interpolation of positive knots with
  constant extrapolation.  Unimodal tables (rising up to 0, falling after)
  give a proper distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .numerics import (
    QuadratureSpec,
    RootBracket,
    find_root,
    integrate,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_ppf,
    std_normal_sf,
)

__all__ = [
    "LinearH",
    "TabulatedH",
    "HFunction",
    "RlndParams",
    "NormalParams",
    "MassReport",
    "OutOfRangeError",
    "ParamFormatError",
    "h_eval",
    "rlnd_cdf",
    "rlnd_sf",
    "rlnd_cdf_quadrature",
    "rlnd_pdf",
    "two_term_density",
    "mass_report",
    "rlnd_quantile",
    "rlnd_sample",
    "rlnd_moments",
    "h_max",
    "dump_params",
    "load_params",
    "format_float",
]


class OutOfRangeError(ValueError):
    """Probability outside the range the (defective) CDF actually attains."""


class ParamFormatError(ValueError):
    pass


def format_float(x: float) -> str:
    """Shortest round-trip decimal representation (<= 17 significant digits)."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# h functions


@dataclass(frozen=True)
class LinearH:
    k_neg: float
    k_pos: float
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"intercept c must be > 0, got {self.c}")
        if not self.k_neg <= 0:
            raise ValueError(f"k_neg must be <= 0, got {self.k_neg}")
        if not self.k_pos >= 0:
            raise ValueError(f"k_pos must be >= 0, got {self.k_pos}")

    @classmethod
    def symmetric(cls, k: float, c: float) -> "LinearH":
        """``h(t) = k*|t| + c``, the form used throughout the fitted tables."""
        k = abs(float(k))
        return cls(-k, k, float(c))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= 0, self.k_neg * t, self.k_pos * t) + self.c
        return float(out) if out.ndim == 0 else out

    def slope(self, t):
        """Right derivative of h."""
        t = np.asarray(t, dtype=float)
        out = np.where(t < 0, self.k_neg, self.k_pos)
        return float(out) if out.ndim == 0 else out.astype(float)

    @property
    def is_symmetric(self) -> bool:
        return self.k_pos == -self.k_neg


@dataclass(frozen=True)
class TabulatedH:
    """Piecewise-linear h through ``(y, h)`` knots, constant beyond the ends.

    Only positivity and knot ordering are enforced here; whether the table
    has the unimodal shape that makes F a distribution is a property
    (:attr:`is_unimodal`) checked by :mod:`rlnd.validity`.
    """

    y: tuple
    h: tuple

    def __post_init__(self):
        y = tuple(float(v) for v in self.y)
        h = tuple(float(v) for v in self.h)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h", h)
        if len(y) != len(h) or len(y) < 1:
            raise ValueError("knot arrays must be non-empty and of equal length")
        if any(b <= a for a, b in zip(y[:-1], y[1:])):
            raise ValueError("knot abscissae must be strictly increasing")
        if not all(v > 0 and math.isfinite(v) for v in h):
            raise ValueError("tabulated h values must be finite and > 0")

    def __call__(self, t):
        out = np.interp(np.asarray(t, dtype=float), self.y, self.h)
        return float(out) if np.ndim(out) == 0 else out

    def slope(self, t):
        """Right derivative; zero outside the knot range."""
        t = np.asarray(t, dtype=float)
        y = np.asarray(self.y)
        if y.size == 1:
            out = np.zeros_like(t)
        else:
            seg_slopes = np.diff(self.h) / np.diff(y)
            idx = np.searchsorted(y, t, side="right") - 1
            inside = (idx >= 0) & (idx < y.size - 1)
            out = np.where(inside, seg_slopes[np.clip(idx, 0, y.size - 2)], 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def is_unimodal(self) -> bool:
        """Non-decreasing on knots below 0, non-increasing from 0 on."""
        y, h = np.asarray(self.y), np.asarray(self.h)
        grid = np.union1d(y, [0.0])
        hv = np.interp(grid, y, h)
        left = np.diff(hv[grid <= 0])
        right = np.diff(hv[grid >= 0])
        return bool(np.all(left >= 0) and np.all(right <= 0))


HFunction = Union[LinearH, TabulatedH]


def h_eval(h: HFunction, y):
    return h(y)


# ---------------------------------------------------------------------------
# parameter sets


@dataclass(frozen=True)
class NormalParams:
    """Classical N(mu, sigma^2), used as the baseline model."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    def cdf(self, y):
        return std_normal_cdf((np.asarray(y, dtype=float) - self.mu) / self.sigma)

    def sf(self, y):
        return std_normal_sf((np.asarray(y, dtype=float) - self.mu) / self.sigma)

    def pdf(self, y):
        return std_normal_pdf((np.asarray(y, dtype=float) - self.mu) / self.sigma) / self.sigma

    def ppf(self, p):
        return self.mu + self.sigma * std_normal_ppf(p)

    @property
    def total_mass(self) -> float:
        return 1.0


@dataclass(frozen=True)
class RlndParams:
    mu: float
    sigma: float
    h: HFunction = field(default_factory=lambda: LinearH(0.0, 0.0, 1.0))

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")

    @classmethod
    def symmetric(cls, mu: float, sigma: float, k: float, c: float) -> "RlndParams":
        """N(mu, sigma^2, K, c) with ``h(t) = K|t| + c``."""
        return cls(float(mu), float(sigma), LinearH.symmetric(k, c))

    # method forms, so binning and fitting code can treat both models alike
    def cdf(self, y):
        return rlnd_cdf(self, y)

    def sf(self, y):
        return rlnd_sf(self, y)

    def pdf(self, y):
        return rlnd_pdf(self, y)

    def ppf(self, p):
        return rlnd_quantile(self, p)

    @property
    def total_mass(self) -> float:
        return mass_report(self).mass


@dataclass(frozen=True)
class MassReport:
    lower_mass: float
    upper_mass: float
    defect: float

    @property
    def mass(self) -> float:
        return self.upper_mass - self.lower_mass


def mass_report(p: RlndParams) -> MassReport:
    """Tail limits of the CDF and the probability mass it never reaches."""
    h = p.h
    if isinstance(h, LinearH):
        # sigma*k can underflow to zero for subnormal slopes: same limit as k = 0
        sk_neg, sk_pos = p.sigma * h.k_neg, p.sigma * h.k_pos
        lower = std_normal_cdf(1.0 / sk_neg) if sk_neg < 0 else 0.0
        upper_gap = std_normal_sf(1.0 / sk_pos) if sk_pos > 0 else 0.0
        return MassReport(lower, 1.0 - upper_gap, lower + upper_gap)
    return MassReport(0.0, 1.0, 0.0)


def h_max(p: RlndParams) -> float:
    """Scale factor used to size evaluation grids.

    For tables this is the largest knot value.  Linear h is unbounded, so
    the maximum is taken over the central window ``|t| <= 12*sigma*h(0)``.
    """
    h = p.h
    if isinstance(h, TabulatedH):
        return max(h.h)
    w = 12.0 * p.sigma * h.c
    return max(h(-w), h(w))


# ---------------------------------------------------------------------------
# CDF / density


def _standardise(p: RlndParams, y):
    t = np.asarray(y, dtype=float) - p.mu
    with np.errstate(invalid="ignore"):
        u = t / (p.sigma * np.asarray(p.h(t)))
    return t, u


def rlnd_cdf(p: RlndParams, y):
    """``Phi((y - mu) / (sigma * h(y - mu)))``; limits are returned at +-inf."""
    t, u = _standardise(p, y)
    out = np.asarray(std_normal_cdf(u), dtype=float)
    if np.any(np.isinf(t)):
        m = mass_report(p)
        out = np.where(t == -np.inf, m.lower_mass, np.where(t == np.inf, m.upper_mass, out))
    return float(out) if out.ndim == 0 else out


def rlnd_sf(p: RlndParams, y):
    """``upper_mass - F(y)``, computed from the upper tail to avoid cancellation."""
    t, u = _standardise(p, y)
    m = mass_report(p)
    gap = 1.0 - m.upper_mass
    out = np.asarray(std_normal_sf(u), dtype=float) - gap
    out = np.where(t == np.inf, 0.0, np.where(t == -np.inf, m.mass, out))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def rlnd_cdf_quadrature(p: RlndParams, y: float, spec: Optional[QuadratureSpec] = None) -> float:
    """Direct quadrature of the defining integral, h frozen at the evaluation point."""
    t = float(y) - p.mu
    s = p.sigma * p.h(t)
    norm = 1.0 / math.sqrt(2.0 * math.pi * s * s)

    def integrand(x):
        return norm * np.exp(-x * x / (2.0 * s * s))

    points = [t - j * s for j in (1.0, 4.0, 8.0, 16.0, 40.0)]
    if t > 0:
        points.append(0.0)
    return integrate(integrand, -math.inf, t, spec, points=points)


def rlnd_pdf(p: RlndParams, y):
    """Right derivative of the CDF.

    ``phi(u) * (h(t) - t*h'(t)) / (sigma * h(t)^2)`` with ``t = y - mu``;
    for linear h the bracket is exactly ``c`` on both branches.
    """
    t, u = _standardise(p, y)
    h = p.h
    ht = np.asarray(h(t), dtype=float)
    if isinstance(h, LinearH):
        numer = h.c
    else:
        numer = ht - t * np.asarray(h.slope(t))
    with np.errstate(invalid="ignore", over="ignore"):
        out = std_normal_pdf(u) * numer / (p.sigma * ht * ht)
    out = np.where(np.isinf(t), 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def two_term_density(p: RlndParams, y: float, spec: Optional[QuadratureSpec] = None) -> float:
    """Density as the two-term integral expression obtained by differentiating
    the defining integral under the sign.

    With slope ``a = sigma*k`` and scale ``b = sigma*h(t)`` on the branch
    containing t::

        f = a / sqrt(2 pi b^4) * int_{-inf}^{t} exp(-x^2/2b^2) (x^2/b^2 - 1) dx
            + exp(-t^2/2b^2) / sqrt(2 pi b^2)
    """
    h = p.h
    if not isinstance(h, LinearH):
        raise TypeError("the two-term density expression needs a linear h")
    t = float(y) - p.mu
    k = h.k_neg if t <= 0 else h.k_pos
    a = p.sigma * k
    b = p.sigma * h(t)
    second = math.exp(-t * t / (2.0 * b * b)) / math.sqrt(2.0 * math.pi * b * b)
    if a == 0:
        return second
    scale = a / math.sqrt(2.0 * math.pi * b ** 4)

    def integrand(x):
        r = x * x / (b * b)
        return scale * np.exp(-0.5 * r) * (r - 1.0)

    points = [t - j * b for j in (1.0, 4.0, 8.0, 16.0, 40.0)]
    first = integrate(integrand, -math.inf, t, spec, points=points)
    return first + second


# ---------------------------------------------------------------------------
# quantile, sampling, moments


def _linear_quantile(p: RlndParams, z):
    h = p.h
    k = np.where(z > 0, h.k_pos, h.k_neg)
    sz = p.sigma * z
    return p.mu + sz * h.c / (1.0 - sz * k)


def _tabulated_quantile(p: RlndParams, prob: float, z: float) -> float:
    if z == 0:
        return p.mu
    hs = p.h.h
    # t = sigma*z*h(t) with h bounded by the knot values
    ends = sorted((p.sigma * z * min(hs), p.sigma * z * max(hs)))
    pad = 1e-9 * max(1.0, abs(ends[0]), abs(ends[1])) + 1e-300
    bracket = RootBracket(ends[0] - pad, ends[1] + pad, tol=1e-15)
    t = find_root(lambda s: std_normal_cdf(s / (p.sigma * p.h(s))) - prob, bracket)
    return p.mu + t


def rlnd_quantile(p: RlndParams, prob):
    """Inverse CDF on the attainable range ``(lower_mass, upper_mass)``.

    Linear h inverts in closed form: with ``z = Phi^-1(prob)``,
    ``y = mu + sigma*z*c / (1 - sigma*z*k)`` on the branch of z's sign.
    """
    m = mass_report(p)
    arr = np.asarray(prob, dtype=float)
    bad = ~((arr > m.lower_mass) & (arr < m.upper_mass))
    if np.any(bad):
        first = arr[bad].ravel()[0] if arr.ndim else float(arr)
        raise OutOfRangeError(
            f"probability {first!r} is outside the attainable range "
            f"({m.lower_mass!r}, {m.upper_mass!r}) of this distribution")
    z = np.asarray(std_normal_ppf(arr), dtype=float)
    if isinstance(p.h, LinearH):
        out = _linear_quantile(p, z)
    else:
        out = np.array([_tabulated_quantile(p, float(pi), float(zi))
                        for pi, zi in zip(arr.ravel(), z.ravel())]).reshape(arr.shape)
    return float(out) if np.ndim(out) == 0 else out


def rlnd_sample(p: RlndParams, n: int, seed: Optional[int] = None, rng: Optional[np.random.Generator] = None):
    """Draw ``n`` values from the renormalised distribution F / (upper - lower).

    Pass either ``seed`` or an existing ``rng``; a generator must not be
    shared between threads.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    if rng is None:
        rng = np.random.default_rng(seed)
    m = mass_report(p)
    v = rng.random(n)
    probs = m.lower_mass + m.mass * v
    # keep strictly inside the attainable range
    probs = np.clip(probs, np.nextafter(m.lower_mass, 1.0), np.nextafter(m.upper_mass, 0.0))
    return np.asarray(rlnd_quantile(p, probs), dtype=float)


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float

    def __iter__(self):
        return iter((self.mean, self.variance, self.skewness, self.excess_kurtosis))


def rlnd_moments(p: RlndParams, spec: Optional[QuadratureSpec] = None, trim: Optional[float] = None) -> Moments:
    """Mean, variance, skewness and excess kurtosis of the renormalised law.

    With a non-zero slope of linear h the density decays like ``1/t^2``, so
    no moment of order >= 1 exists on that side: the mean is +-inf (nan if
    both sides diverge), variance and excess kurtosis are inf, and skewness
    is nan.  ``trim`` gives finite moments of the law conditioned on its
    central ``1 - 2*trim`` probability mass instead.
    """
    spec = spec or QuadratureSpec()
    m = mass_report(p)
    if trim is None:
        h = p.h
        if isinstance(h, LinearH) and (h.k_neg < 0 or h.k_pos > 0):
            if h.k_neg < 0 and h.k_pos > 0:
                mean = math.nan
            else:
                mean = math.inf if h.k_pos > 0 else -math.inf
            return Moments(mean, math.inf, math.nan, math.inf)
        lo, hi, mass = -math.inf, math.inf, m.mass
    else:
        if not 0 < trim < 0.5:
            raise ValueError("trim must lie in (0, 0.5)")
        lo = rlnd_quantile(p, m.lower_mass + trim * m.mass)
        hi = rlnd_quantile(p, m.upper_mass - trim * m.mass)
        mass = (1.0 - 2.0 * trim) * m.mass

    s = p.sigma * p.h(0.0)
    points = [p.mu + j * s for j in (-8.0, -2.0, 0.0, 2.0, 8.0)]

    def raw(order, centre):
        return integrate(lambda y: (y - centre) ** order * rlnd_pdf(p, y), lo, hi, spec, points) / mass

    mean = raw(1, 0.0)
    var = raw(2, mean)
    m3 = raw(3, mean)
    m4 = raw(4, mean)
    return Moments(mean, var, m3 / var ** 1.5, m4 / var ** 2 - 3.0)


# ---------------------------------------------------------------------------
# text serialisation

_KEYS = ("mu", "sigma", "k_neg", "k_pos", "c")


def dump_params(p: RlndParams) -> str:
    """Key-value text form; tabulated h follows as a ``y,h`` CSV block."""
    lines = [f"mu = {format_float(p.mu)}", f"sigma = {format_float(p.sigma)}"]
    if isinstance(p.h, LinearH):
        lines += [f"k_neg = {format_float(p.h.k_neg)}",
                  f"k_pos = {format_float(p.h.k_pos)}",
                  f"c = {format_float(p.h.c)}"]
    else:
        lines.append("y,h")
        lines += [f"{format_float(y)},{format_float(h)}" for y, h in zip(p.h.y, p.h.h)]
    return "\n".join(lines) + "\n"


def load_params(text: str) -> RlndParams:
    values = {}
    knots = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if knots is not None:
            parts = line.split(",")
            if len(parts) != 2:
                raise ParamFormatError(f"line {lineno}: expected 'y,h', got {raw!r}")
            try:
                knots.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ParamFormatError(f"line {lineno}: non-numeric knot {raw!r}") from None
            continue
        if line.replace(" ", "") == "y,h":
            knots = []
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in _KEYS:
            raise ParamFormatError(f"line {lineno}: unrecognised entry {raw!r}")
        if key in values:
            raise ParamFormatError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = float(val)
        except ValueError:
            raise ParamFormatError(f"line {lineno}: {key} is not a number: {val.strip()!r}") from None

    for key in ("mu", "sigma"):
        if key not in values:
            raise ParamFormatError(f"missing required key {key!r}")
    try:
        if knots is not None:
            if any(k in values for k in ("k_neg", "k_pos", "c")):
                raise ParamFormatError("give either k_neg/k_pos/c or a y,h table, not both")
            if not knots:
                raise ParamFormatError("empty y,h table")
            h = TabulatedH(tuple(k[0] for k in knots), tuple(k[1] for k in knots))
        else:
            missing = [k for k in ("k_neg", "k_pos", "c") if k not in values]
            if missing:
                raise ParamFormatError(f"missing required key(s) {', '.join(missing)}")
            h = LinearH(values["k_neg"], values["k_pos"], values["c"])
        return RlndParams(values["mu"], values["sigma"], h)
    except ParamFormatError:
        raise
    except ValueError as exc:
        raise ParamFormatError(str(exc)) from None
