"""Daily price files -> log-return series."""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import format_float

__all__ = [
    "IngestError",
    "PriceRecord",
    "ReturnSeries",
    "read_price_csv",
    "log_returns",
    "filter_range",
    "parse_date",
    "write_returns",
    "read_returns",
    "load_series",
]

DATE_FORMATS = ("%Y-%m-%d", "%m/%d/%Y")


class IngestError(ValueError):
    """Malformed price or return data; messages name the offending row."""


@dataclass(frozen=True)
class PriceRecord:
    date: dt.date
    close: float


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    values: np.ndarray
    source_label: str = ""
    date_range: Optional[Tuple[dt.date, dt.date]] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise IngestError("return series must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise IngestError("return series contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.n


def parse_date(text: str) -> dt.date:
    text = text.strip()
    for fmt in DATE_FORMATS:
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unrecognised date {text!r} (expected YYYY-MM-DD or MM/DD/YYYY)")


def read_price_csv(path, date_column: str = "Date", price_column: Optional[str] = None,
                   delimiter: str = ",") -> List[PriceRecord]:
    """Read ``(date, close)`` records sorted by date.

    ``price_column`` defaults to ``Adj Close`` when the header has it, else
    ``Close``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"price file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file (a header row is required)") from None
        if price_column is None:
            price_column = "Adj Close" if "Adj Close" in header else "Close"
        for col in (date_column, price_column):
            if col not in header:
                raise IngestError(f"{path}: column {col!r} not in header {header}")
        di, pi = header.index(date_column), header.index(price_column)

        records = []
        seen = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) <= max(di, pi):
                raise IngestError(f"{path}:{line}: row has {len(row)} fields, expected {len(header)}")
            try:
                date = parse_date(row[di])
            except ValueError as exc:
                raise IngestError(f"{path}:{line}: {exc}") from None
            cell = row[pi].strip()
            try:
                close = float(cell)
            except ValueError:
                raise IngestError(f"{path}:{line}: price {cell!r} in column {price_column!r} is not a number") from None
            if not math.isfinite(close) or close <= 0:
                raise IngestError(f"{path}:{line}: price must be positive and finite, got {cell!r}")
            if date in seen:
                raise IngestError(f"{path}:{line}: duplicate date {date.isoformat()} (first on line {seen[date]})")
            seen[date] = line
            records.append(PriceRecord(date, close))
    records.sort(key=lambda r: r.date)
    return records


def filter_range(prices: Sequence[PriceRecord], start: Optional[dt.date] = None,
                 end: Optional[dt.date] = None) -> List[PriceRecord]:
    """Records with ``start <= date <= end``; either bound may be omitted."""
    if start is not None and end is not None and start > end:
        raise ValueError(f"start {start} is after end {end}")
    out = [r for r in prices
           if (start is None or r.date >= start) and (end is None or r.date <= end)]
    if not out:
        warnings.warn(f"no price records between {start} and {end}", stacklevel=2)
    return out


def log_returns(prices: Sequence[PriceRecord], source_label: str = "") -> ReturnSeries:
    if len(prices) < 2:
        raise IngestError(f"need at least 2 price records to form a return, got {len(prices)}")
    closes = np.array([r.close for r in prices])
    values = np.log(closes[1:] / closes[:-1])
    return ReturnSeries(values, source_label, (prices[0].date, prices[-1].date))


# ---------------------------------------------------------------------------
# one-value-per-line return files


def write_returns(series: ReturnSeries, path) -> None:
    lines = [f"# source: {series.source_label}"]
    if series.date_range is not None:
        lines.append(f"# dates: {series.date_range[0].isoformat()} {series.date_range[1].isoformat()}")
    lines += [format_float(v) for v in series.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_returns(path) -> ReturnSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"returns file not found: {path}")
    label, dates, values = "", None, []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, rest = line[1:].partition(":")
            if key.strip() == "source":
                label = rest.strip()
            elif key.strip() == "dates":
                parts = rest.split()
                if len(parts) == 2:
                    dates = (parse_date(parts[0]), parse_date(parts[1]))
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise IngestError(f"{path}:{lineno}: not a number: {line!r}") from None
    if not values:
        raise IngestError(f"{path}: no return values")
    return ReturnSeries(np.array(values), label, dates)


def load_series(path, date_column: str = "Date", price_column: Optional[str] = None,
                start: Optional[dt.date] = None, end: Optional[dt.date] = None) -> ReturnSeries:
    """Read either a price CSV (``.csv``) or a returns file into a ReturnSeries."""
    path = Path(path)
    if path.suffix.lower() in (".csv", ".tsv", ".txt") and _looks_like_prices(path):
        delim = "\t" if path.suffix.lower() == ".tsv" else ","
        prices = read_price_csv(path, date_column, price_column, delimiter=delim)
        if start is not None or end is not None:
            prices = filter_range(prices, start, end)
        return log_returns(prices, path.name)
    if start is not None or end is not None:
        raise IngestError("--from/--to need a price file with dates, not a returns file")
    return read_returns(path)


def _looks_like_prices(path: Path) -> bool:
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open() as fh:
        first = fh.readline().strip()
    if not first or first.startswith("#"):
        return False
    try:
        float(first)
        return False
    except ValueError:
        return True
