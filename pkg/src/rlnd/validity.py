"""Mechanical checks that a parameter set defines a distribution.

* grid scans of the CDF for monotonicity (any h),
* the sign of ``K m^2 - m - K`` on ``(1/K, 0]`` that drives the positivity
  argument for linear h,
* positivity and tail decay of the density,
* an independent Crank-Nicolson solve of the heat equation whose solution
  at ``(t, x) = (1, 0)`` defines F(y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg.lapack import dpttrf, dpttrs

from .core import LinearH, RlndParams, TabulatedH, h_max, mass_report, rlnd_cdf, rlnd_pdf
from .numerics import ConvergenceError

__all__ = [
    "MONOTONE_TOL",
    "ValidityReport",
    "DerivativeSignCheck",
    "PositivityCheck",
    "HeatSolveSpec",
    "HeatSolution",
    "InstabilityError",
    "check_monotone_cdf",
    "verify_case2_derivative_sign",
    "verify_fx_positive",
    "heat_equation_oracle",
    "scan_halfwidth",
]

MONOTONE_TOL = 1e-13


def scan_halfwidth(p: RlndParams) -> float:
    return 12.0 * p.sigma * h_max(p)


@dataclass(frozen=True)
class DerivativeSignCheck:
    holds: bool
    min_margin: float
    argmin: float
    q_at_zero: float
    q_at_inv_k: float


def verify_case2_derivative_sign(k: float, samples: int = 10_000) -> DerivativeSignCheck:
    """Check ``q(m) = k*m^2 - m - k > 0`` on a uniform grid over ``(1/k, 0]``.

    ``k`` is the negative-branch slope.  Both endpoint values equal ``-k``
    exactly; the quadratic opens downward so the minimum sits at an end.
    """
    if not k < 0:
        raise ValueError(f"slope must be negative, got {k}")
    if samples < 2:
        raise ValueError("need at least two samples")
    lo = 1.0 / k
    # open at 1/k, closed at 0
    m = lo + (0.0 - lo) * np.arange(1, samples + 1) / samples
    q = k * m * m - m - k
    i = int(np.argmin(q))
    q0 = -k
    q_inv = k * lo * lo - lo - k  # == -k analytically
    holds = bool(np.all(q > 0)) and q0 > 0 and q_inv > 0
    return DerivativeSignCheck(holds, float(q[i]), float(m[i]), float(q0), float(q_inv))


def _slope_checks(h, samples=10_000):
    checks = []
    if isinstance(h, LinearH):
        if h.k_neg < 0:
            checks.append(verify_case2_derivative_sign(h.k_neg, samples))
        if h.k_pos > 0:
            # y -> -y maps the right branch onto the left one
            checks.append(verify_case2_derivative_sign(-h.k_pos, samples))
    return checks


@dataclass
class ValidityReport:
    is_monotone: bool
    violations: List[Tuple[float, float, float, float]]
    grid_size: int
    case2_condition_holds: Optional[bool]
    min_derivative_margin: float
    h_unimodal: Optional[bool] = None

    def to_text(self) -> str:
        na = "not-applicable"
        lines = [
            f"is_monotone: {str(self.is_monotone).lower()}",
            f"grid_size: {self.grid_size}",
            f"violations: {len(self.violations)}",
            "case2_condition_holds: "
            + (na if self.case2_condition_holds is None else str(self.case2_condition_holds).lower()),
            f"min_derivative_margin: {self.min_derivative_margin!r}",
            "h_unimodal: " + (na if self.h_unimodal is None else str(self.h_unimodal).lower()),
        ]
        for y0, f0, y1, f1 in self.violations[:50]:
            lines.append(f"  F({y0!r}) = {f0!r} > F({y1!r}) = {f1!r}")
        if len(self.violations) > 50:
            lines.append(f"  ... {len(self.violations) - 50} more")
        return "\n".join(lines) + "\n"


def check_monotone_cdf(p: RlndParams, grid_size: int = 10_000) -> ValidityReport:
    """Scan F on ``mu +- 12*sigma*h_max`` plus its two tail limits."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    w = scan_halfwidth(p)
    y = np.linspace(p.mu - w, p.mu + w, grid_size)
    m = mass_report(p)
    ys = np.concatenate([[-np.inf], y, [np.inf]])
    fs = np.concatenate([[m.lower_mass], rlnd_cdf(p, y), [m.upper_mass]])
    drop = fs[:-1] - fs[1:]
    bad = np.nonzero(drop > MONOTONE_TOL)[0]
    violations = [(float(ys[i]), float(fs[i]), float(ys[i + 1]), float(fs[i + 1])) for i in bad]

    checks = _slope_checks(p.h)
    if checks:
        holds = all(c.holds for c in checks)
        margin = min(c.min_margin for c in checks)
    else:
        holds, margin = None, math.nan
    unimodal = p.h.is_unimodal if isinstance(p.h, TabulatedH) else None
    return ValidityReport(not violations, violations, grid_size, holds, margin, unimodal)


@dataclass(frozen=True)
class PositivityCheck:
    holds: bool
    min_pdf: float
    edge_pdf: float
    tail_decays: bool
    tail_probe: Tuple[float, ...] = field(default=())


def verify_fx_positive(p: RlndParams, grid_size: int = 10_001) -> PositivityCheck:
    """Scan the density for strict positivity and probe its left-tail decay.

    With non-zero slopes the density only falls off like ``1/t^2``, so at the
    scan edge it can still exceed 1e-12.  The decay claim is therefore
    tested on probes ``mu - 10^j * halfwidth`` (j = 0..20): the values must be
    non-increasing and drop below 1e-12.
    """
    if not isinstance(p.h, LinearH):
        raise TypeError("density positivity scan is defined for linear h")
    w = scan_halfwidth(p)
    y = np.linspace(p.mu - w, p.mu + w, grid_size)
    f = rlnd_pdf(p, y)
    probes = rlnd_pdf(p, p.mu - w * 10.0 ** np.arange(0, 21))
    decays = bool(np.all(np.diff(probes) <= 0) and probes[-1] < 1e-12)
    positive = bool(np.all(f > 0))
    return PositivityCheck(positive and decays, float(np.min(f)), float(f[0]), decays,
                           tuple(float(v) for v in probes))


# ---------------------------------------------------------------------------
# heat-equation oracle


class InstabilityError(ConvergenceError):
    pass


@dataclass(frozen=True)
class HeatSolveSpec:
    domain_halfwidth_multiplier: float = 10.0
    space_points: int = 4001
    time_steps: int = 2000
    smoothing_width: Optional[float] = None  # None -> one space step

    def __post_init__(self):
        if self.space_points < 101 or self.space_points % 2 == 0:
            raise ValueError("space_points must be odd and >= 101")
        if self.time_steps < 10:
            raise ValueError("time_steps must be >= 10")
        if self.domain_halfwidth_multiplier <= 0:
            raise ValueError("domain_halfwidth_multiplier must be positive")
        if self.smoothing_width is not None and self.smoothing_width < 0:
            raise ValueError("smoothing_width must be >= 0")

    def refined(self, factor: int = 2) -> "HeatSolveSpec":
        return HeatSolveSpec(self.domain_halfwidth_multiplier,
                             (self.space_points - 1) * factor + 1,
                             self.time_steps * factor,
                             None if self.smoothing_width is None else self.smoothing_width / factor)


@dataclass(frozen=True)
class HeatSolution:
    value: float
    error_estimate: float
    space_points: int
    time_steps: int

    def __float__(self):
        return self.value


def _crank_nicolson(t_jump, scale, halfwidth, n_space, n_time, smoothing):
    """u(1, 0) for u_t = (scale^2/2) u_xx, u(0, x) = 1{x <= t_jump}."""
    n = (n_space - 1) // 2
    # stretch the domain slightly so that both 0 and the jump are grid nodes;
    # keeps the discretisation error a smooth function of the step size
    j = round(abs(t_jump) * n / halfwidth)
    if j > 0:
        halfwidth = n * abs(t_jump) / j
    x = np.linspace(-halfwidth, halfwidth, n_space)
    dx = x[1] - x[0]
    w = dx if smoothing is None else smoothing
    if w > 0:
        u = np.clip((t_jump - x) / w + 0.5, 0.0, 1.0)
    else:
        u = (x <= t_jump).astype(float)

    dt = 1.0 / n_time
    r = 0.5 * scale * scale * dt / (dx * dx)
    m = n_space - 2
    # (I - r/2 A) is symmetric positive definite tridiagonal
    d, e, info = dpttrf(np.full(m, 1.0 + r), np.full(m - 1, -0.5 * r))
    if info != 0:
        raise InstabilityError(f"tridiagonal factorisation failed (info={info})")
    interior = u[1:-1].copy()
    for _ in range(n_time):
        rhs = (1.0 - r) * interior
        rhs[1:] += 0.5 * r * interior[:-1]
        rhs[:-1] += 0.5 * r * interior[1:]
        rhs[0] += r  # left boundary u = 1 at both time levels
        interior, info = dpttrs(d, e, rhs)
    return float(interior[n - 1])


def heat_equation_oracle(p: RlndParams, y: float, spec: Optional[HeatSolveSpec] = None) -> HeatSolution:
    """Solve the constant-coefficient heat equation with diffusivity
    ``(sigma*h(y - mu))^2 / 2`` from the indicator ``1{x <= y - mu}`` to t = 1
    and return ``u(1, 0)``.

    The domain is ``|x| <= |y - mu| + multiplier*sigma*h`` (stretched so the
    jump falls on a node) with Dirichlet values 1 (left) and 0 (right).  The
    error estimate is the difference to a solve on half the space and time
    resolution.
    """
    spec = spec or HeatSolveSpec()
    t = float(y) - p.mu
    scale = p.sigma * p.h(t)
    halfwidth = abs(t) + spec.domain_halfwidth_multiplier * scale
    fine = _crank_nicolson(t, scale, halfwidth, spec.space_points, spec.time_steps, spec.smoothing_width)
    coarse_w = None if spec.smoothing_width is None else 2.0 * spec.smoothing_width
    coarse = _crank_nicolson(t, scale, halfwidth, (spec.space_points - 1) // 2 + 1,
                             max(spec.time_steps // 2, 1), coarse_w)
    err = abs(fine - coarse)
    if not math.isfinite(fine) or err > 0.01:
        raise InstabilityError(
            f"heat solve error estimate {err:.3g} exceeds 0.01 at y={y!r}", fine, err)
    return HeatSolution(fine, err, spec.space_points, spec.time_steps)
