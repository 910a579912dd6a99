"""Tick ingestion, bar resampling, sector aggregation and descriptive statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

__all__ = [
    "TickSeries",
    "BarSeries",
    "SummaryStats",
    "DataError",
    "DegenerateInputError",
    "parse_timestamp",
    "load_ticks",
    "load_sector_map",
    "resample",
    "resample_bars",
    "aggregate_sector",
    "complete_members",
    "summary_stats",
    "write_bars",
    "read_bars",
]


class DataError(ValueError):
    """Malformed or inconsistent market data."""


class DegenerateInputError(ValueError):
    """Input has zero variance where dispersion is required."""


@dataclass(frozen=True)
class TickSeries:
    instrument_id: str
    timestamps: np.ndarray
    prices: np.ndarray
    volumes: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        px = np.asarray(self.prices, dtype=float)
        vol = np.asarray(self.volumes, dtype=float)
        if not ts.shape == px.shape == vol.shape:
            raise DataError("timestamps, prices and volumes must have equal length")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            bad = int(np.argmax(np.diff(ts) <= 0)) + 1
            raise DataError(f"timestamps not strictly increasing at row {bad}")
        if np.any(~(px > 0.0)):
            raise DataError(f"non-positive price at row {int(np.argmax(~(px > 0.0)))}")
        if np.any(~(vol >= 0.0)):
            raise DataError(f"negative volume at row {int(np.argmax(~(vol >= 0.0)))}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)
        object.__setattr__(self, "volumes", vol)

    def __len__(self) -> int:
        return int(self.timestamps.size)


@dataclass(frozen=True)
class BarSeries:
    """Bar-close timestamps with the log-return and summed volume of each bar."""

    timestamps: np.ndarray
    log_returns: np.ndarray
    volumes: np.ndarray
    interval_seconds: int

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        ret = np.asarray(self.log_returns, dtype=float)
        vol = np.asarray(self.volumes, dtype=float)
        if not ts.shape == ret.shape == vol.shape:
            raise DataError("bar arrays must have equal length")
        if int(self.interval_seconds) <= 0:
            raise DataError("interval_seconds must be positive")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "log_returns", ret)
        object.__setattr__(self, "volumes", vol)
        object.__setattr__(self, "interval_seconds", int(self.interval_seconds))

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def window(self, start: int | None, stop: int | None) -> "BarSeries":
        return BarSeries(
            self.timestamps[start:stop], self.log_returns[start:stop], self.volumes[start:stop], self.interval_seconds
        )


@dataclass(frozen=True)
class SummaryStats:
    n: int
    min: float
    max: float
    mean: float
    std_dev: float
    skewness: float
    kurtosis: float
    quantile_1pct: float
    jarque_bera: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def parse_timestamp(value: str) -> int:
    """Epoch seconds from an integer string or an ISO-8601 stamp (naive = UTC)."""
    value = value.strip()
    try:
        return int(value)
    except ValueError:
        pass
    try:
        as_float = float(value)
    except ValueError:
        as_float = None
    if as_float is not None:
        if not as_float.is_integer():
            raise DataError(f"sub-second timestamp {value!r} not supported")
        return int(as_float)
    stamp = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    if stamp.microsecond:
        raise DataError(f"sub-second timestamp {value!r} not supported")
    return int(stamp.timestamp())


def load_ticks(path, instrument_id: str | None = None) -> TickSeries:
    """Read a ``timestamp,price,volume`` CSV; the file stem is the default id."""
    path = Path(path)
    ts: list[int] = []
    px: list[float] = []
    vol: list[float] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["timestamp", "price", "volume"]:
            raise DataError(f"{path}:1: expected header 'timestamp,price,volume', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                t = parse_timestamp(row[0])
                p = float(row[1])
                v = float(row[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not p > 0.0 or not math.isfinite(p):
                raise DataError(f"{path}:{lineno}: non-positive price {row[1]!r}")
            if not v >= 0.0 or not math.isfinite(v):
                raise DataError(f"{path}:{lineno}: invalid volume {row[2]!r}")
            if ts and t <= ts[-1]:
                kind = "duplicate" if t == ts[-1] else "non-monotone"
                raise DataError(f"{path}:{lineno}: {kind} timestamp {row[0]!r}")
            ts.append(t)
            px.append(p)
            vol.append(v)
    return TickSeries(instrument_id or path.stem, np.array(ts, dtype=np.int64), np.array(px), np.array(vol))


def load_sector_map(path) -> dict[str, str]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["instrument_id", "sector"]:
            raise DataError(f"{path}:1: expected header 'instrument_id,sector'")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            iid, sector = (row.get("instrument_id") or "").strip(), (row.get("sector") or "").strip()
            if not iid or not sector:
                raise DataError(f"{path}:{lineno}: empty instrument_id or sector")
            out[iid] = sector
    return out


def _source_spacing(timestamps: np.ndarray) -> int:
    return int(np.min(np.diff(timestamps)))


def resample(ticks: TickSeries, interval_seconds: int) -> BarSeries:
    """Aggregate ticks into epoch-aligned bars closing at multiples of the interval.

    A bar closing at ``t`` collects ticks in ``(t - interval, t]``. Its return is
    the log change of the close price against the previous bar's close, so the
    first bar only serves as the reference and is not emitted. Bars exist only
    where ticks exist; returns across session gaps are kept as-is.
    """
    interval = int(interval_seconds)
    if interval <= 0:
        raise DataError("interval must be positive")
    if len(ticks) < 2:
        raise DataError("need at least two ticks to resample")
    spacing = _source_spacing(ticks.timestamps)
    if interval % spacing:
        raise DataError(f"interval {interval}s is not a multiple of the source spacing {spacing}s")
    closes_at = -(-ticks.timestamps // interval) * interval
    boundaries = np.flatnonzero(np.diff(closes_at)) + 1
    last_idx = np.append(boundaries - 1, closes_at.size - 1)
    starts = np.insert(boundaries, 0, 0)
    bar_ts = closes_at[last_idx]
    close = ticks.prices[last_idx]
    vol = np.add.reduceat(ticks.volumes, starts)
    if bar_ts.size < 2:
        raise DataError("resampling produced fewer than 2 bars")
    return BarSeries(bar_ts[1:], np.diff(np.log(close)), vol[1:], interval)


def resample_bars(bars: BarSeries, interval_seconds: int) -> BarSeries:
    """Coarsen an existing bar series; log-returns and volumes are summed per bar."""
    interval = int(interval_seconds)
    if interval % bars.interval_seconds:
        raise DataError(f"interval {interval}s is not a multiple of {bars.interval_seconds}s")
    closes_at = -(-bars.timestamps // interval) * interval
    starts = np.insert(np.flatnonzero(np.diff(closes_at)) + 1, 0, 0)
    return BarSeries(
        closes_at[starts],
        np.add.reduceat(bars.log_returns, starts),
        np.add.reduceat(bars.volumes, starts),
        interval,
    )


def complete_members(members: dict[str, BarSeries]) -> tuple[dict[str, BarSeries], list[str]]:
    """Split members into those covering the union grid and those with gaps."""
    if not members:
        return {}, []
    grid = np.unique(np.concatenate([b.timestamps for b in members.values()]))
    keep, dropped = {}, []
    for name in sorted(members):
        bars = members[name]
        if bars.timestamps.size == grid.size and np.array_equal(bars.timestamps, grid):
            keep[name] = bars
        else:
            dropped.append(name)
    return keep, dropped


def aggregate_sector(members: list[BarSeries]) -> BarSeries:
    """Cross-sectional mean of log-returns and sum of volumes on a shared grid."""
    if not members:
        raise DataError("empty member list")
    first = members[0]
    for m in members[1:]:
        if m.interval_seconds != first.interval_seconds or not np.array_equal(m.timestamps, first.timestamps):
            raise DataError("sector members do not share identical timestamps")
    returns = np.mean(np.vstack([m.log_returns for m in members]), axis=0)
    volumes = np.sum(np.vstack([m.volumes for m in members]), axis=0)
    return BarSeries(first.timestamps.copy(), returns, volumes, first.interval_seconds)


def summary_stats(returns) -> SummaryStats:
    """Moments, 1% empirical quantile and Jarque-Bera statistic.

    Skewness and kurtosis use the biased (population) central moments, and
    kurtosis is not in excess form, so a Gaussian sample gives about 3.
    """
    r = np.asarray(returns, dtype=float)
    n = r.size
    if n < 4:
        raise ValueError("summary statistics need at least 4 observations")
    dev = r - r.mean()
    m2 = float(np.mean(dev**2))
    if not m2 > 0.0:
        raise DegenerateInputError("series has zero variance")
    skew = float(np.mean(dev**3)) / m2**1.5
    kurt = float(np.mean(dev**4)) / m2**2
    return SummaryStats(
        n=n,
        min=float(r.min()),
        max=float(r.max()),
        mean=float(r.mean()),
        std_dev=float(np.std(r, ddof=1)),
        skewness=skew,
        kurtosis=kurt,
        quantile_1pct=float(np.quantile(r, 0.01)),
        jarque_bera=n / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0),
    )


def write_bars(bars: BarSeries, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "log_return", "volume"])
        for t, r, v in zip(bars.timestamps, bars.log_returns, bars.volumes):
            w.writerow([int(t), repr(float(r)), repr(float(v))])


def read_bars(path, interval_seconds: int) -> BarSeries:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return BarSeries(data[:, 0].astype(np.int64), data[:, 1], data[:, 2], interval_seconds)
