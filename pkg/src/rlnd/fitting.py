"""Parameter estimation.

mu and sigma come from the sample mean and standard deviation.  The slope K
and intercept c of ``h(t) = K|t| + c`` are found by evaluating a
goodness-of-fit objective on a (K, c) grid and polishing the best grid point
with a bounded Nelder-Mead search.

Note that F depends on sigma only through ``sigma*K`` and ``sigma*c``; with
sigma held fixed the search is over those two products.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .core import LinearH, NormalParams, RlndParams, format_float, mass_report, rlnd_pdf
from .gof import BinningSpec, GofError, bin_data, delta_pair, model_bin_probs
from .ingest import ReturnSeries
from .numerics import nelder_mead

__all__ = [
    "OBJECTIVES",
    "FitSpec",
    "FitResult",
    "ObjectiveSurface",
    "Objective",
    "fit_normal",
    "fit_rlnd",
    "fixed_fit",
    "identifiability_scan",
    "evaluate_statistics",
]

OBJECTIVES = ("delta_ccn_paper", "delta_ccn_standard", "neg_log_likelihood")


@dataclass(frozen=True)
class FitSpec:
    objective: str = "delta_ccn_standard"
    k_bounds: Tuple[float, float] = (0.0, 200.0)
    c_bounds: Tuple[float, float] = (0.01, 5.0)
    grid_resolution: int = 40
    polish: bool = True
    binning: BinningSpec = field(default_factory=BinningSpec)
    seed: int = 0
    symmetric: bool = True
    joint: bool = False  # also move mu (likelihood objective only)
    renormalize: bool = True
    threads: Optional[int] = None
    max_iter: int = 2000

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; choose from {OBJECTIVES}")
        klo, khi = self.k_bounds
        clo, chi = self.c_bounds
        if not (0 <= klo <= khi):
            raise ValueError("k_bounds must satisfy 0 <= lo <= hi")
        if not (0 < clo <= chi):
            raise ValueError("c_bounds must satisfy 0 < lo <= hi")
        if self.grid_resolution < 1:
            raise ValueError("grid_resolution must be >= 1")
        if self.joint and self.objective != "neg_log_likelihood":
            raise ValueError("joint fitting is only defined for the likelihood objective")


def fit_normal(data) -> NormalParams:
    x = data.values if isinstance(data, ReturnSeries) else np.asarray(data, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two observations")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise ValueError("degenerate data: all observations are equal")
    return NormalParams(float(np.mean(x)), sd)


class Objective:
    """Goodness-of-fit objective on frozen data; pure, safe to call from threads."""

    def __init__(self, data, spec: FitSpec, normal: Optional[NormalParams] = None):
        self.x = data.values if isinstance(data, ReturnSeries) else np.asarray(data, dtype=float)
        self.spec = spec
        self.normal = normal or fit_normal(self.x)
        self.bins = bin_data(self.x, spec.binning, reference=self.normal)
        self.normal_probs = model_bin_probs(self.normal, self.bins)

    def params(self, k_neg: float, k_pos: float, c: float, mu: Optional[float] = None) -> RlndParams:
        return RlndParams(self.normal.mu if mu is None else mu, self.normal.sigma, LinearH(k_neg, k_pos, c))

    def __call__(self, p: RlndParams) -> float:
        if self.spec.objective == "neg_log_likelihood":
            mass = mass_report(p).mass
            with np.errstate(divide="ignore"):
                ll = np.log(rlnd_pdf(p, self.x)) - math.log(mass)
            value = -float(np.sum(ll))
            return value if math.isfinite(value) else math.inf
        denominator = "paper" if self.spec.objective == "delta_ccn_paper" else "standard"
        rlnd_probs = model_bin_probs(p, self.bins, renormalize=self.spec.renormalize)
        try:
            _, ccn = delta_pair(self.bins, self.normal_probs, rlnd_probs, denominator)
        except GofError:
            return math.inf
        return ccn.statistic


@dataclass
class FitResult:
    params: RlndParams
    objective: str
    objective_value: float
    normal_baseline: Tuple[NormalParams, float]
    trace: List[Tuple[float, float, float, float, float]]  # (mu, k_neg, k_pos, c, value)
    converged: bool

    def trace_tsv(self) -> str:
        rows = ["mu\tk_neg\tk_pos\tc\tobjective"]
        rows += ["\t".join(format_float(v) for v in row) for row in self.trace]
        return "\n".join(rows) + "\n"


def _axis(lo: float, hi: float, n: int, floor: Optional[float] = None) -> np.ndarray:
    # geometric spacing: K and c act as scale parameters.  With lo = 0 the
    # axis is 0 followed by a geometric run starting at ``floor``.
    if n == 1 or lo == hi:
        return np.array([math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)])
    if lo > 0:
        return np.geomspace(lo, hi, n)
    floor = min(hi * 1e-3, floor) if floor else hi * 1e-3
    return np.concatenate([[0.0], np.geomspace(floor, hi, n - 1)])


def _k_floor(sigma: float) -> float:
    # F sees K only through sigma*K; below sigma*K = 1e-3 h is flat to 0.1%
    # over one standard deviation, indistinguishable from K = 0
    return 1e-3 / sigma


def _map(fn, items, threads):
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _check_size(x, spec):
    m = spec.binning.group_count_m
    if x.size < 10 * m:
        raise ValueError(f"need at least 10*m = {10 * m} observations for {m} groups, got {x.size}")


@dataclass
class ObjectiveSurface:
    k_values: np.ndarray
    c_values: np.ndarray
    values: np.ndarray  # shape (len(k_values), len(c_values))

    def argmin(self) -> Tuple[float, float, float]:
        i, j = np.unravel_index(np.argmin(self.values), self.values.shape)
        return float(self.k_values[i]), float(self.c_values[j]), float(self.values[i, j])

    def to_tsv(self) -> str:
        rows = ["k\tc\tobjective"]
        for i, k in enumerate(self.k_values):
            for j, c in enumerate(self.c_values):
                rows.append(f"{format_float(k)}\t{format_float(c)}\t{format_float(self.values[i, j])}")
        return "\n".join(rows) + "\n"


def identifiability_scan(data, spec: Optional[FitSpec] = None, objective: Optional[Objective] = None) -> ObjectiveSurface:
    """Objective over the full symmetric (K, c) grid."""
    spec = spec or FitSpec()
    obj = objective or Objective(data, spec)
    _check_size(obj.x, spec)
    ks = _axis(*spec.k_bounds, spec.grid_resolution, floor=_k_floor(obj.normal.sigma))
    cs = _axis(*spec.c_bounds, spec.grid_resolution)
    points = [(k, c) for k in ks for c in cs]
    values = _map(lambda kc: obj(obj.params(-kc[0], kc[0], kc[1])), points, spec.threads)
    return ObjectiveSurface(ks, cs, np.array(values).reshape(ks.size, cs.size))


def fit_rlnd(data, spec: Optional[FitSpec] = None) -> FitResult:
    """Grid search over symmetric (K, c), then Nelder-Mead polish."""
    spec = spec or FitSpec()
    obj = Objective(data, spec)
    surface = identifiability_scan(data, spec, obj)
    mu0 = obj.normal.mu
    trace = [(mu0, -k, k, c, surface.values[i, j])
             for i, k in enumerate(surface.k_values) for j, c in enumerate(surface.c_values)]
    k_best, c_best, _ = surface.argmin()
    converged = True

    if spec.polish:
        ks, cs = surface.k_values, surface.c_values
        i = int(np.searchsorted(ks, k_best))
        j = int(np.searchsorted(cs, c_best))
        k_step = _local_step(ks, i, spec.k_bounds)
        c_step = _local_step(cs, j, spec.c_bounds)

        if spec.symmetric:
            x0, bounds, steps = [k_best, c_best], [spec.k_bounds, spec.c_bounds], [k_step, c_step]
        else:
            x0 = [k_best, k_best, c_best]
            bounds = [spec.k_bounds, spec.k_bounds, spec.c_bounds]
            steps = [k_step, k_step, c_step]
        if spec.joint:
            sd = obj.normal.sigma
            x0 = [mu0] + x0
            bounds = [(mu0 - sd, mu0 + sd)] + bounds
            steps = [0.05 * sd] + steps

        def unpack(v):
            v = list(v)
            mu = v.pop(0) if spec.joint else mu0
            if spec.symmetric:
                k, c = v
                return mu, -k, k, c
            kn, kp, c = v
            return mu, -kn, kp, c

        def f(v):
            mu, kn, kp, c = unpack(v)
            value = obj(obj.params(kn, kp, c, mu))
            trace.append((mu, kn, kp, c, value))
            return value

        res = nelder_mead(f, x0, bounds, spec.max_iter, xatol=1e-10, fatol=1e-10, initial_step=steps)
        converged = res.converged

    best = min(trace, key=lambda row: row[4])
    mu, kn, kp, c, value = best
    params = obj.params(kn, kp, c, mu)
    baseline = delta_pair(obj.bins, obj.normal_probs, obj.normal_probs)[0].statistic
    return FitResult(params, spec.objective, float(value), (obj.normal, baseline), trace, converged)


def _local_step(axis, i, bounds):
    if axis.size == 1:
        width = bounds[1] - bounds[0]
        return 0.05 * width if width > 0 else 0.05 * max(abs(bounds[0]), 1e-3)
    i = min(max(i, 1), axis.size - 1)
    return float(axis[i] - axis[i - 1])


def fixed_fit(data, spec: FitSpec, k: float, c: float) -> FitResult:
    """Evaluate the objective at given (K, c) without searching."""
    obj = Objective(data, spec)
    _check_size(obj.x, spec)
    params = obj.params(-abs(k), abs(k), c)
    value = obj(params)
    baseline = delta_pair(obj.bins, obj.normal_probs, obj.normal_probs)[0].statistic
    trace = [(params.mu, params.h.k_neg, params.h.k_pos, c, value)]
    return FitResult(params, spec.objective, value, (obj.normal, baseline), trace, True)


def evaluate_statistics(data, params: RlndParams, binning: BinningSpec, renormalize: bool = True) -> dict:
    """Both indices and both delta_ccn variants for ``params`` on ``data``.

    Shared by the ``fit`` and ``gof`` commands so the two agree exactly.
    """
    x = data.values if isinstance(data, ReturnSeries) else np.asarray(data, dtype=float)
    normal = fit_normal(x)
    bins = bin_data(x, binning, reference=normal)
    normal_probs = model_bin_probs(normal, bins)
    rlnd_probs = model_bin_probs(params, bins, renormalize=renormalize)
    delta, ccn_paper = delta_pair(bins, normal_probs, rlnd_probs, "paper")
    _, ccn_standard = delta_pair(bins, normal_probs, rlnd_probs, "standard")
    m = mass_report(params)
    return {
        "n": int(x.size),
        "m": bins.m,
        "normal": {"mu": normal.mu, "sigma": normal.sigma},
        "delta": delta.to_dict(),
        "delta_ccn_paper": ccn_paper.to_dict(),
        "delta_ccn_standard": ccn_standard.to_dict(),
        "mass": {"lower_mass": m.lower_mass, "upper_mass": m.upper_mass, "defect": m.defect},
        "renormalize": renormalize,
        "data_min": float(x.min()),
        "data_max": float(x.max()),
        "_bins": bins,
        "_normal_probs": normal_probs,
        "_rlnd_probs": rlnd_probs,
        "_reports": (delta, ccn_standard, ccn_paper),
    }
