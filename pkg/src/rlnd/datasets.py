"""Bundled synthetic price series.

``golden_prices.csv`` holds 5000 daily log returns drawn from the mixture
``0.9 N(0, 0.01^2) + 0.1 N(0, 0.03^2)`` (standard deviation ~0.0134, with a
taller peak and fatter tails than a normal of the same variance), cumulated
into closes starting at 1000 on business days from 2000-01-03.
"""

from __future__ import annotations

import datetime as dt
from importlib import resources
from pathlib import Path

import numpy as np

from .core import format_float

GOLDEN_SEED = 20000103
GOLDEN_SIZE = 5000


def golden_prices_path() -> Path:
    return Path(str(resources.files("rlnd") / "data" / "golden_prices.csv"))


def leptokurtic_returns(n: int, seed: int, scale: float = 0.01) -> np.ndarray:
    rng = np.random.default_rng(seed)
    wide = rng.random(n) < 0.1
    return rng.normal(0.0, 1.0, n) * np.where(wide, 3.0 * scale, scale)


def business_days(start: dt.date, n: int):
    day = start
    out = []
    while len(out) < n:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return out


def write_golden_prices(path, n: int = GOLDEN_SIZE, seed: int = GOLDEN_SEED) -> None:
    returns = leptokurtic_returns(n, seed)
    closes = 1000.0 * np.exp(np.concatenate([[0.0], np.cumsum(returns)]))
    dates = business_days(dt.date(2000, 1, 3), n + 1)
    lines = ["Date,Close"] + [f"{d.isoformat()},{format_float(c)}" for d, c in zip(dates, closes)]
    Path(path).write_text("\n".join(lines) + "\n")
