import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newsvar.marketdata import (
    BarSeries,
    DataError,
    DegenerateInputError,
    TickSeries,
    aggregate_sector,
    complete_members,
    load_sector_map,
    load_ticks,
    parse_timestamp,
    read_bars,
    resample,
    resample_bars,
    summary_stats,
    write_bars,
)

from . import oracles


def _ticks(prices, start=0, step=60, volumes=None):
    n = len(prices)
    ts = start + step * np.arange(n)
    return TickSeries("X", ts, np.asarray(prices, float), np.ones(n) if volumes is None else np.asarray(volumes, float))


def test_parse_timestamp_forms():
    assert parse_timestamp("1388566800") == 1388566800
    assert parse_timestamp("1388566800.0") == 1388566800
    assert parse_timestamp("2014-01-01T09:00:00") == 1388566800
    assert parse_timestamp("2014-01-01T10:00:00+01:00") == 1388566800
    assert parse_timestamp("2014-01-01T09:00:00Z") == 1388566800
    with pytest.raises(DataError):
        parse_timestamp("1388566800.5")


def test_load_ticks_errors_carry_line_numbers(tmp_path):
    f = tmp_path / "A.csv"
    f.write_text("timestamp,price,volume\n60,10,1\n120,11,2\n120,12,3\n")
    with pytest.raises(DataError, match=r"A.csv:4: duplicate"):
        load_ticks(f)
    f.write_text("timestamp,price,volume\n60,10,1\n30,11,2\n")
    with pytest.raises(DataError, match=r":3: non-monotone"):
        load_ticks(f)
    f.write_text("timestamp,price,volume\n60,-1,1\n")
    with pytest.raises(DataError, match=r":2: non-positive price"):
        load_ticks(f)
    f.write_text("time,price,volume\n60,1,1\n")
    with pytest.raises(DataError, match="header"):
        load_ticks(f)
    f.write_text("timestamp,price,volume\n60,10,1\n120,11,2\n")
    ticks = load_ticks(f)
    assert ticks.instrument_id == "A" and len(ticks) == 2


def test_load_sector_map(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("instrument_id,sector\nA,S1\nB,S1\n")
    assert load_sector_map(f) == {"A": "S1", "B": "S1"}
    f.write_text("instrument_id,sector\nA,\n")
    with pytest.raises(DataError):
        load_sector_map(f)


def test_resample_hand_case():
    # minutes 1..10 with closes at 300 and 600
    prices = [100, 101, 102, 103, 104, 105, 106, 107, 108, 109, 110]
    ticks = _ticks(prices, start=0, step=60, volumes=np.arange(11))
    bars = resample(ticks, 300)
    # bar closes: 0 (ref, tick 0), 300 (ticks 1..5), 600 (ticks 6..10)
    np.testing.assert_array_equal(bars.timestamps, [300, 600])
    np.testing.assert_allclose(bars.log_returns, [math.log(105 / 100), math.log(110 / 105)])
    np.testing.assert_allclose(bars.volumes, [1 + 2 + 3 + 4 + 5, 6 + 7 + 8 + 9 + 10])


def test_resample_requires_multiple_of_spacing():
    with pytest.raises(DataError, match="multiple"):
        resample(_ticks([1, 2, 3, 4], step=60), 90)


@settings(max_examples=50, deadline=None)
@given(
    steps=st.lists(st.floats(-0.01, 0.01), min_size=5, max_size=200),
    interval=st.sampled_from([60, 120, 300]),
)
def test_resampled_returns_telescope(steps, interval):
    prices = 50.0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
    ticks = _ticks(prices, start=60, step=60)
    try:
        bars = resample(ticks, interval)
    except DataError:
        return
    # sum of bar returns equals log(last close / first bar close)
    first_close_idx = np.flatnonzero(-(-ticks.timestamps // interval) * interval == bars.timestamps[0] - interval)
    ref = prices[first_close_idx[-1]]
    assert bars.log_returns.sum() == pytest.approx(math.log(prices[-1] / ref), abs=1e-12)
    assert np.all(np.diff(bars.timestamps) >= interval)
    assert np.all(bars.timestamps % interval == 0)


def test_resample_bars_equals_direct_resample():
    rng = np.random.default_rng(0)
    prices = 20 * np.exp(np.cumsum(rng.normal(0, 1e-3, 601)))
    ticks = _ticks(prices, start=0, step=60, volumes=rng.integers(0, 9, 601))
    fine = resample(ticks, 60)
    coarse = resample_bars(fine, 300)
    direct = resample(ticks, 300)
    np.testing.assert_array_equal(coarse.timestamps, direct.timestamps)
    np.testing.assert_allclose(coarse.log_returns, direct.log_returns, atol=1e-14)
    np.testing.assert_allclose(coarse.volumes, direct.volumes)


def test_sector_aggregation_and_completeness():
    a = BarSeries([60, 120, 180], [0.1, 0.2, 0.3], [1, 1, 1], 60)
    b = BarSeries([60, 120, 180], [0.3, 0.0, -0.3], [2, 2, 2], 60)
    c = BarSeries([60, 180], [0.0, 0.0], [5, 5], 60)
    keep, dropped = complete_members({"a": a, "b": b, "c": c})
    assert sorted(keep) == ["a", "b"] and dropped == ["c"]
    agg = aggregate_sector(list(keep.values()))
    np.testing.assert_allclose(agg.log_returns, [0.2, 0.1, 0.0])
    np.testing.assert_allclose(agg.volumes, [3, 3, 3])
    with pytest.raises(DataError):
        aggregate_sector([a, c])


def test_summary_stats_matches_oracle():
    values = [1.0, 2.0, 3.0, 4.0, 5.0, 100.0]
    s = summary_stats(values)
    assert s.jarque_bera == pytest.approx(3.5362153440831117, abs=1e-10)
    assert s.jarque_bera == pytest.approx(oracles.jarque_bera(values), rel=1e-12)
    assert s.std_dev == pytest.approx(np.std(values, ddof=1))
    assert s.quantile_1pct == pytest.approx(np.quantile(values, 0.01))
    with pytest.raises(DegenerateInputError):
        summary_stats([1.0] * 10)


def test_gaussian_kurtosis_near_three():
    s = summary_stats(np.random.default_rng(1).standard_normal(200_000))
    assert s.kurtosis == pytest.approx(3.0, abs=0.05)
    assert abs(s.skewness) < 0.02


def test_bar_csv_roundtrip(tmp_path):
    bars = BarSeries([60, 120], [0.1234567890123, -1e-17], [3.0, 4.5], 60)
    write_bars(bars, tmp_path / "b.csv")
    back = read_bars(tmp_path / "b.csv", 60)
    np.testing.assert_array_equal(back.log_returns, bars.log_returns)
    np.testing.assert_array_equal(back.timestamps, bars.timestamps)
