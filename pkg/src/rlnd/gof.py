"""Histogram binning and Pearson chi-square goodness of fit.

``lambda = sum_i (n / p_i) * (q_i - p_i)^2`` with ``q_i = n_i / n`` the observed
relative frequency of bin i and ``p_i`` the model probability.  Two models
are compared on the same bins: the classical normal (index ``delta``) and
the random limit normal (index ``delta_ccn``).  ``delta_ccn`` is available
with the normal's ``p_i`` in the denominator (``paper``) or with its own
probabilities (``standard``, ordinary Pearson).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import NormalParams, RlndParams, format_float
from .ingest import ReturnSeries
from .numerics import chi_square_sf

__all__ = [
    "GofError",
    "BinningSpec",
    "BinnedSample",
    "GofReport",
    "bin_data",
    "model_bin_probs",
    "pearson_lambda",
    "delta_pair",
    "fitted_param_count",
    "lambda_null_distribution",
    "write_bin_table",
]

NORMAL_PARAMS = 2
RLND_PARAMS = 4

Model = Union[NormalParams, RlndParams]


class GofError(ValueError):
    pass


@dataclass(frozen=True)
class BinningSpec:
    mode: str = "equal_width"
    group_count_m: int = 50
    range_multiplier: float = 6.0
    min_expected_count: float = 5.0
    bounds: Optional[Tuple[float, float]] = None  # overrides mean +- multiplier*sd

    def __post_init__(self):
        if self.mode not in ("equal_width", "equal_probability"):
            raise ValueError(f"unknown binning mode {self.mode!r}")
        if self.group_count_m < 2:
            raise ValueError("need at least 2 groups")
        if not self.range_multiplier > 0:
            raise ValueError("range_multiplier must be positive")
        if self.min_expected_count < 0:
            raise ValueError("min_expected_count must be >= 0")
        if self.bounds is not None and not self.bounds[0] < self.bounds[1]:
            raise ValueError("bounds must satisfy lo < hi")


@dataclass(frozen=True, eq=False)
class BinnedSample:
    """Counts on half-open bins ``[edges[i], edges[i+1])``; outer edges are +-inf."""

    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.size != counts.size + 1:
            raise GofError("need exactly one more edge than bins")
        if np.any(np.diff(edges) <= 0):
            raise GofError("bin edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def m(self) -> int:
        return int(self.counts.size)

    @property
    def q(self) -> np.ndarray:
        return self.counts / self.n


def _values(data) -> np.ndarray:
    if isinstance(data, ReturnSeries):
        return data.values
    return np.asarray(data, dtype=float).ravel()


def model_bin_probs(model: Model, bins: Union[BinnedSample, Sequence[float]], renormalize: bool = True) -> np.ndarray:
    """``p_i = F(edge_{i+1}) - F(edge_i)``.

    Bins right of the model centre are differenced on the survival function so
    small upper-tail probabilities keep their relative accuracy.  For a
    defective model the probabilities sum to ``upper - lower`` unless
    ``renormalize`` is set.
    """
    edges = bins.edges if isinstance(bins, BinnedSample) else np.asarray(bins, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    upper = lo >= model.mu
    probs = np.where(upper, model.sf(lo) - model.sf(hi), model.cdf(hi) - model.cdf(lo))
    probs = np.maximum(probs, 0.0)
    if renormalize:
        probs = probs / model.total_mass
    return probs


def _merge(edges, counts, expected, floor):
    edges, counts, expected = list(edges), list(counts), list(expected)

    def join(i):
        # merge bin i with bin i+1
        counts[i] += counts.pop(i + 1)
        expected[i] += expected.pop(i + 1)
        edges.pop(i + 1)

    while len(counts) > 1 and expected[0] < floor:
        join(0)
    while len(counts) > 1 and expected[-1] < floor:
        join(len(counts) - 2)
    while len(counts) > 1:
        i = int(np.argmin(expected))
        if expected[i] >= floor:
            break
        if i == 0:
            join(0)
        elif i == len(counts) - 1 or expected[i - 1] <= expected[i + 1]:
            join(i - 1)
        else:
            join(i)
    return np.array(edges), np.array(counts)


def bin_data(data, spec: Optional[BinningSpec] = None, reference: Optional[Model] = None) -> BinnedSample:
    """Group observations into ``m`` disjoint bins covering the real line.

    ``reference`` (default: normal with the sample mean and sd) supplies the
    quantiles for ``equal_probability`` mode and the expected counts used to
    merge sparse bins, outermost first.
    """
    spec = spec or BinningSpec()
    x = _values(data)
    if x.size == 0:
        raise GofError("cannot bin an empty sample")
    mean = float(x.mean())
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    if reference is None and (spec.mode == "equal_probability" or spec.min_expected_count > 0):
        if not sd > 0:
            raise GofError("sample has zero spread; cannot build a reference normal")
        reference = NormalParams(mean, sd)

    m = spec.group_count_m
    if spec.mode == "equal_width":
        if spec.bounds is not None:
            lo, hi = spec.bounds
        else:
            if not sd > 0:
                raise GofError("sample has zero spread; give explicit bin bounds")
            lo, hi = mean - spec.range_multiplier * sd, mean + spec.range_multiplier * sd
        edges = np.linspace(lo, hi, m + 1)
    else:
        total = reference.total_mass
        lower = 0.0 if isinstance(reference, NormalParams) else reference.cdf(-np.inf)
        levels = lower + total * np.arange(1, m) / m
        edges = np.concatenate([[0.0], np.asarray(reference.ppf(levels), dtype=float), [0.0]])
    edges[0], edges[-1] = -np.inf, np.inf

    idx = np.searchsorted(edges, x, side="right") - 1
    counts = np.bincount(idx, minlength=edges.size - 1)

    if spec.min_expected_count > 0:
        expected = x.size * model_bin_probs(reference, edges, renormalize=True)
        edges, counts = _merge(edges, counts, expected, spec.min_expected_count)
    return BinnedSample(edges, counts)


@dataclass
class GofReport:
    statistic: float
    df: int
    p_value: float
    variant: str
    per_bin: List[Tuple[float, float, float]] = field(default_factory=list)  # (p_i, q_i, contribution)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "statistic": self.statistic, "df": self.df, "p_value": self.p_value}


def fitted_param_count(variant: str) -> int:
    return NORMAL_PARAMS if variant in ("delta",) else RLND_PARAMS


def _pearson(bins: BinnedSample, probs, denom, fitted: int, variant: str) -> GofReport:
    probs = np.asarray(probs, dtype=float)
    denom = np.asarray(denom, dtype=float)
    if probs.shape != (bins.m,) or denom.shape != (bins.m,):
        raise GofError(f"expected {bins.m} bin probabilities, got {probs.size}")
    for name, arr in (("model", probs), ("denominator", denom)):
        if np.any(~(arr > 0)):
            i = int(np.nonzero(~(arr > 0))[0][0])
            raise GofError(f"{name} probability of bin {i} is {arr[i]!r}; all bins need p_i > 0 (merge or widen bins)")
    if probs.sum() > 1 + 1e-9:
        raise GofError(f"bin probabilities sum to {probs.sum()!r} > 1")
    df = bins.m - 1 - fitted
    if df < 1:
        raise GofError(
            f"degrees of freedom m - 1 - r = {bins.m} - 1 - {fitted} = {df} < 1; use more bins")
    n, q = bins.n, bins.q
    # (n_i - n p_i)^2 / (n d_i) is n/d_i (q_i - p_i)^2 without the rounding in q_i
    with np.errstate(over="ignore"):
        contrib = (bins.counts - n * probs) ** 2 / (n * denom)
        stat = float(contrib.sum())
    per_bin = [(float(p), float(qi), float(c)) for p, qi, c in zip(probs, q, contrib)]
    return GofReport(stat, df, chi_square_sf(stat, df), variant, per_bin)


def pearson_lambda(bins: BinnedSample, probs, fitted_params: int = 0) -> GofReport:
    """Pearson statistic with ``df = m - 1 - fitted_params``."""
    return _pearson(bins, probs, probs, fitted_params, "lambda")


def delta_pair(bins: BinnedSample, normal_probs, rlnd_probs, denominator: str = "standard") -> Tuple[GofReport, GofReport]:
    """``(delta, delta_ccn)`` for the fitted normal and random limit normal."""
    if denominator not in ("paper", "standard"):
        raise ValueError(f"denominator must be 'paper' or 'standard', got {denominator!r}")
    delta = _pearson(bins, normal_probs, normal_probs, NORMAL_PARAMS, "delta")
    denom = normal_probs if denominator == "paper" else rlnd_probs
    ccn = _pearson(bins, rlnd_probs, denom, RLND_PARAMS, f"delta_ccn_{denominator}")
    return delta, ccn


def lambda_null_distribution(model: Model, n: int, m: int, replications: int, seed: int,
                             sampler=None) -> np.ndarray:
    """Monte-Carlo draws of lambda when the data really come from ``model``.

    Bins are ``m`` equal-probability groups under the model (no parameters
    fitted, so lambda should follow chi2 with m - 1 df).  Every replication
    gets its own RNG stream spawned from ``seed``.
    """
    from .core import rlnd_sample

    spec = BinningSpec(mode="equal_probability", group_count_m=m, min_expected_count=0)
    probs = None
    out = np.empty(replications)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(replications)):
        rng = np.random.default_rng(child)
        if sampler is not None:
            x = sampler(rng, n)
        elif isinstance(model, RlndParams):
            x = rlnd_sample(model, n, rng=rng)
        else:
            x = rng.normal(model.mu, model.sigma, n)
        bins = bin_data(x, spec, reference=model)
        if probs is None:
            probs = model_bin_probs(model, bins, renormalize=True)
        out[i] = pearson_lambda(bins, probs).statistic
    return out


def write_bin_table(path, bins: BinnedSample, normal_probs, rlnd_probs, delta: GofReport, ccn: GofReport) -> None:
    """TSV: edge_lo, edge_hi, count, q_i, p_i, p_i_ccn, contribution, contribution_ccn."""
    header = ["edge_lo", "edge_hi", "count", "q_i", "p_i", "p_i_ccn", "contribution", "contribution_ccn"]
    rows = ["\t".join(header)]
    for i in range(bins.m):
        rows.append("\t".join([
            format_float(bins.edges[i]), format_float(bins.edges[i + 1]), str(int(bins.counts[i])),
            format_float(bins.q[i]), format_float(normal_probs[i]), format_float(rlnd_probs[i]),
            format_float(delta.per_bin[i][2]), format_float(ccn.per_bin[i][2]),
        ]))
    Path(path).write_text("\n".join(rows) + "\n")


def read_bin_table(path) -> dict:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split("\t")
    cols = {h: [] for h in header}
    for line in lines[1:]:
        if not line.strip():
            continue
        for h, v in zip(header, line.split("\t")):
            cols[h].append(float(v))
    return {h: np.array(v) for h, v in cols.items()}
