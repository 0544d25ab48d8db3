import datetime as dt
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlnd.datasets import golden_prices_path
from rlnd.ingest import (
    IngestError,
    PriceRecord,
    ReturnSeries,
    filter_range,
    load_series,
    log_returns,
    parse_date,
    read_price_csv,
    read_returns,
    write_returns,
)

D1, D2, D3 = dt.date(2001, 1, 2), dt.date(2001, 1, 3), dt.date(2001, 1, 4)


def write(tmp_path, text, name="prices.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def records(*closes):
    start = dt.date(2000, 1, 3)
    return [PriceRecord(start + dt.timedelta(days=i), c) for i, c in enumerate(closes)]


def test_read_three_rows(tmp_path):
    path = write(tmp_path, "Date,Close\n2001-01-02,100\n2001-01-03,101\n2001-01-04,99.5\n")
    recs = read_price_csv(path)
    assert [r.close for r in recs] == [100.0, 101.0, 99.5]
    assert [r.date for r in recs] == [D1, D2, D3]


def test_read_blank_price_names_row(tmp_path):
    path = write(tmp_path, "Date,Close\n2001-01-02,100\n2001-01-03,\n2001-01-04,99.5\n")
    with pytest.raises(IngestError, match=r":3:"):
        read_price_csv(path)


def test_read_sorts_unsorted_rows(tmp_path):
    path = write(tmp_path, "Date,Close\n2001-01-04,99.5\n2001-01-02,100\n2001-01-03,101\n")
    assert [r.date for r in read_price_csv(path)] == [D1, D2, D3]


def test_read_rejects_duplicates_and_non_positive(tmp_path):
    dup = write(tmp_path, "Date,Close\n2001-01-02,100\n2001-01-02,101\n", "dup.csv")
    with pytest.raises(IngestError, match="duplicate date"):
        read_price_csv(dup)
    neg = write(tmp_path, "Date,Close\n2001-01-02,100\n2001-01-03,-1\n", "neg.csv")
    with pytest.raises(IngestError, match=r":3:.*positive"):
        read_price_csv(neg)


def test_read_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        read_price_csv(tmp_path / "nope.csv")


def test_read_prefers_adjusted_close_and_quoting(tmp_path):
    text = 'Date,Open,"Close","Adj Close"\n01/02/2001,1,"1,000.5",50\n01/03/2001,1,2000,55\n'
    recs = read_price_csv(write(tmp_path, text))
    assert [r.close for r in recs] == [50.0, 55.0]
    assert recs[0].date == D1
    with pytest.raises(IngestError, match="not a number"):
        read_price_csv(write(tmp_path, text, "b.csv"), price_column="Close")


def test_read_missing_column(tmp_path):
    with pytest.raises(IngestError, match="column"):
        read_price_csv(write(tmp_path, "Day,Close\n2001-01-02,1\n"))


def test_parse_date_formats():
    assert parse_date("2012-12-31") == parse_date("12/31/2012") == dt.date(2012, 12, 31)
    with pytest.raises(ValueError):
        parse_date("31.12.2012")


def test_log_returns_definition():
    assert log_returns(records(100, 100)).values.tolist() == [0.0]
    r = log_returns(records(100, 101, 99.5))
    assert r.n == 2
    assert r.values[0] == pytest.approx(math.log(1.01), rel=1e-15)
    assert r.values[1] == pytest.approx(math.log(99.5 / 101), rel=1e-15)
    assert log_returns(records(1.0, math.e)).values[0] == pytest.approx(1.0, rel=1e-15)


def test_log_returns_needs_two_records():
    with pytest.raises(IngestError):
        log_returns(records(100))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1e6), min_size=2, max_size=200))
def test_returns_reconstruct_closes(closes):
    r = log_returns(records(*closes))
    rebuilt = closes[0] * np.exp(np.concatenate([[0.0], np.cumsum(r.values)]))
    assert np.allclose(rebuilt, closes, rtol=1e-10, atol=0)


def test_filter_range_examples():
    recs = [PriceRecord(d, 1.0) for d in (D1, D2, D3)]
    assert filter_range(recs, D1, D3) == recs
    assert filter_range(recs, D2, D2) == [recs[1]]
    with pytest.warns(UserWarning):
        assert filter_range(recs, dt.date(1990, 1, 1), dt.date(1990, 2, 1)) == []
    with pytest.raises(ValueError):
        filter_range(recs, D3, D1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=4, max_size=4))
def test_filter_range_nested_windows(offsets):
    a, b, c, d = sorted(offsets)
    base = dt.date(2000, 1, 1)
    recs = [PriceRecord(base + dt.timedelta(days=i), 1.0 + i) for i in range(0, 61, 2)]
    day = lambda k: base + dt.timedelta(days=k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert filter_range(filter_range(recs, day(a), day(d)), day(b), day(c)) == filter_range(recs, day(b), day(c))


def test_ingestion_idempotent():
    a = load_series(golden_prices_path())
    b = load_series(golden_prices_path())
    assert np.array_equal(a.values, b.values)
    assert a.source_label == b.source_label and a.date_range == b.date_range


def test_returns_file_round_trip(tmp_path):
    s = ReturnSeries(np.array([0.1, -1e-17, 1 / 3]), "unit test", (D1, D3))
    write_returns(s, tmp_path / "r.txt")
    back = read_returns(tmp_path / "r.txt")
    assert np.array_equal(back.values, s.values)
    assert back.source_label == "unit test" and back.date_range == (D1, D3)
    assert (tmp_path / "r.txt").read_text().startswith("# source: unit test\n")


def test_returns_file_errors(tmp_path):
    with pytest.raises(IngestError, match=":2:"):
        read_returns(write(tmp_path, "0.1\nabc\n", "bad.txt"))
    with pytest.raises(IngestError):
        read_returns(write(tmp_path, "# source: x\n", "empty.txt"))


def test_return_series_invariants():
    s = ReturnSeries([0.1, 0.2])
    assert s.n == len(s) == 2
    with pytest.raises(ValueError):
        s.values[0] = 1.0
    with pytest.raises(IngestError):
        ReturnSeries([0.1, math.nan])


def test_load_series_window(tmp_path):
    path = write(tmp_path, "Date,Close\n2001-01-02,100\n2001-01-03,101\n2001-01-04,99.5\n2001-01-05,98\n")
    s = load_series(path, start=D2, end=D3)
    assert s.n == 1 and s.date_range == (D2, D3)
    with pytest.raises(IngestError):
        load_series(write(tmp_path, "0.1\n0.2\n", "r.txt"), start=D1)


def test_golden_file_shape():
    s = load_series(golden_prices_path())
    assert s.n == 5000
    assert s.date_range[0] == dt.date(2000, 1, 3)
