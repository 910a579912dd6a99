"""VaR violation diagnostics: A/E, AD, Kupiec UC, Christoffersen CC, Engle-Manganelli DQ."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import special

__all__ = [
    "HitSeries",
    "StatResult",
    "BacktestReport",
    "SingularDesignError",
    "chi2_sf",
    "hits",
    "ae_ratio",
    "ad_stats",
    "kupiec_uc",
    "christoffersen_cc",
    "engle_manganelli_dq",
    "backtest",
    "write_reports",
]


class SingularDesignError(np.linalg.LinAlgError):
    pass


class StatResult(NamedTuple):
    stat: float
    pvalue: float


@dataclass(frozen=True)
class HitSeries:
    hits: np.ndarray
    tau: float

    def __post_init__(self) -> None:
        h = np.asarray(self.hits).astype(np.int8)
        if np.any((h != 0) & (h != 1)):
            raise ValueError("hits must be binary")
        object.__setattr__(self, "hits", h)

    @property
    def n(self) -> int:
        return int(self.hits.size)

    @property
    def n_hits(self) -> int:
        return int(self.hits.sum())


@dataclass(frozen=True)
class BacktestReport:
    n: int
    n_hits: int
    ae_ratio: float
    ad_mean: float
    ad_max: float
    uc_stat: float
    uc_pvalue: float
    cc_stat: float
    cc_pvalue: float
    dq_stat: float
    dq_pvalue: float

    def as_dict(self) -> dict:
        return asdict(self)


def chi2_sf(x: float, df: float) -> float:
    """Chi-square survival function via the regularized upper incomplete gamma."""
    if x <= 0.0:
        return 1.0
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def _xlogy(x: float, y: float) -> float:
    # 0 * log(0) = 0
    return 0.0 if x == 0 else x * math.log(y)


def hits(realized, var_column, tau: float) -> HitSeries:
    r = np.asarray(realized, dtype=float)
    v = np.asarray(var_column, dtype=float)
    if r.shape != v.shape:
        raise ValueError(f"length mismatch: {r.shape} vs {v.shape}")
    return HitSeries((r < v).astype(np.int8), tau)


def ae_ratio(h: HitSeries) -> float:
    return h.n_hits / (h.n * h.tau)


def ad_stats(realized, var_column, h: HitSeries) -> tuple[float, float]:
    """Mean and max absolute deviation of violating returns; ``(0, 0)`` without hits."""
    mask = h.hits.astype(bool)
    if not mask.any():
        return 0.0, 0.0
    dev = np.abs(np.asarray(realized, dtype=float)[mask] - np.asarray(var_column, dtype=float)[mask])
    return float(dev.mean()), float(dev.max())


def _uc_lr(n0: int, n1: int, tau: float) -> float:
    n = n0 + n1
    pi = n1 / n
    restricted = _xlogy(n0, 1.0 - tau) + _xlogy(n1, tau)
    unrestricted = _xlogy(n0, 1.0 - pi) + _xlogy(n1, pi)
    return max(-2.0 * (restricted - unrestricted), 0.0)


def kupiec_uc(h: HitSeries) -> StatResult:
    if h.n < 1:
        raise ValueError("empty hit series")
    stat = _uc_lr(h.n - h.n_hits, h.n_hits, h.tau)
    return StatResult(stat, chi2_sf(stat, 1))


def transition_counts(h: HitSeries) -> tuple[int, int, int, int]:
    prev, cur = h.hits[:-1], h.hits[1:]
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    return n00, n01, n10, n11


def independence_lr(h: HitSeries) -> float:
    n00, n01, n10, n11 = transition_counts(h)
    pi = (n01 + n11) / (n00 + n01 + n10 + n11)
    pi01 = n01 / (n00 + n01) if n00 + n01 else 0.0
    pi11 = n11 / (n10 + n11) if n10 + n11 else 0.0
    restricted = _xlogy(n00 + n10, 1.0 - pi) + _xlogy(n01 + n11, pi)
    unrestricted = (
        _xlogy(n00, 1.0 - pi01) + _xlogy(n01, pi01) + _xlogy(n10, 1.0 - pi11) + _xlogy(n11, pi11)
    )
    return max(-2.0 * (restricted - unrestricted), 0.0)


def christoffersen_cc(h: HitSeries) -> StatResult:
    if h.n < 2:
        raise ValueError("conditional coverage needs at least two observations")
    stat = kupiec_uc(h).stat + independence_lr(h)
    return StatResult(stat, chi2_sf(stat, 2))


def dq_design(h: HitSeries, var_column, lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Centered hits and the regressor matrix [1, lagged centered hits, VaR_t]."""
    centered = h.hits.astype(float) - h.tau
    v = np.asarray(var_column, dtype=float)
    n = h.n
    cols = [np.ones(n - lags)]
    cols += [centered[lags - k : n - k] for k in range(1, lags + 1)]
    cols.append(v[lags:])
    return centered[lags:], np.column_stack(cols)


def engle_manganelli_dq(h: HitSeries, var_column, lags: int = 4) -> StatResult:
    """Dynamic quantile test.

    Non-intercept columns that are constant (no lagged hits, flat VaR) are
    collinear with the intercept and are dropped, reducing the degrees of
    freedom accordingly. Any remaining rank deficiency raises
    :class:`SingularDesignError`.
    """
    if h.n <= lags + 2:
        raise ValueError(f"need more than {lags + 2} observations for DQ with {lags} lags")
    y, X = dq_design(h, var_column, lags)
    keep = [0] + [j for j in range(1, X.shape[1]) if np.ptp(X[:, j]) > 0.0]
    if len(keep) < X.shape[1]:
        warnings.warn(
            f"DQ: dropped {X.shape[1] - len(keep)} constant regressor(s)", RuntimeWarning, stacklevel=2
        )
        X = X[:, keep]
    xtx = X.T @ X
    if np.linalg.matrix_rank(xtx) < X.shape[1]:
        raise SingularDesignError("DQ design matrix is singular; reduce the number of lags")
    b = np.linalg.solve(xtx, X.T @ y)
    stat = float(b @ xtx @ b) / (h.tau * (1.0 - h.tau))
    return StatResult(stat, chi2_sf(stat, X.shape[1]))


def backtest(realized, var_column, tau: float, dq_lags: int = 4) -> BacktestReport:
    h = hits(realized, var_column, tau)
    ad_mean, ad_max = ad_stats(realized, var_column, h)
    uc = kupiec_uc(h)
    cc = christoffersen_cc(h)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            dq = engle_manganelli_dq(h, var_column, dq_lags)
        except SingularDesignError:
            dq = StatResult(math.nan, math.nan)
    return BacktestReport(
        n=h.n,
        n_hits=h.n_hits,
        ae_ratio=ae_ratio(h),
        ad_mean=ad_mean,
        ad_max=ad_max,
        uc_stat=uc.stat,
        uc_pvalue=uc.pvalue,
        cc_stat=cc.stat,
        cc_pvalue=cc.pvalue,
        dq_stat=dq.stat,
        dq_pvalue=dq.pvalue,
    )


def write_reports(reports: dict[str, BacktestReport], csv_path) -> list[Path]:
    """Model-by-statistic table as CSV plus the same content as JSON."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(BacktestReport.__dataclass_fields__)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_id", *fields])
        for model_id, rep in reports.items():
            w.writerow([model_id, *(repr(v) if isinstance(v, float) else v for v in rep.as_dict().values())])
    json_path = csv_path.with_suffix(".json")
    payload = {m: {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.as_dict().items()}
               for m, r in reports.items()}
    json_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return [csv_path, json_path]
