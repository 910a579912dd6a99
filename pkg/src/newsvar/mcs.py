"""Model Confidence Set under the asymmetric quantile (pinball) loss.

The range statistic ``T_R`` and its elimination rule are evaluated against a
moving-block bootstrap with wrap-around. One set of bootstrap index draws is
shared by every pair and every elimination step.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

__all__ = [
    "LossMatrix",
    "MCSConfig",
    "MCSResult",
    "NoValidPairError",
    "quantile_loss",
    "loss_matrix",
    "block_length",
    "bootstrap_indices",
    "bootstrap_variance",
    "t_r_statistic",
    "mcs_run",
    "write_mcs",
]


class NoValidPairError(ValueError):
    """Every pair has zero bootstrap variance (bit-identical losses)."""


@dataclass(frozen=True)
class LossMatrix:
    losses: np.ndarray
    model_ids: list[str]
    tau: float

    def __post_init__(self) -> None:
        losses = np.asarray(self.losses, dtype=float)
        if losses.ndim != 2 or losses.shape[1] != len(self.model_ids):
            raise ValueError("losses must be [time x model] with one id per column")
        if not np.all(np.isfinite(losses)) or np.any(losses < 0.0):
            raise ValueError("losses must be finite and non-negative")
        object.__setattr__(self, "losses", losses)


@dataclass(frozen=True)
class MCSConfig:
    alpha: float = 0.25
    B: int = 1000
    max_block_lag: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.B < 200:
            raise ValueError("B must be at least 200")
        if self.max_block_lag < 1:
            raise ValueError("max_block_lag must be positive")


@dataclass
class MCSResult:
    surviving_ids: list[str]
    elimination_order: list[tuple[str, float, float]]
    block_length: int
    final_pvalue: float
    pvalues: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "surviving_ids": self.surviving_ids,
            "elimination_order": [
                {"model_id": m, "t_r": t, "pvalue": p} for m, t, p in self.elimination_order
            ],
            "block_length": self.block_length,
            "final_pvalue": self.final_pvalue,
            "mcs_pvalues": self.pvalues,
        }


def quantile_loss(r, var, tau: float):
    """Pinball loss of the return relative to the VaR forecast."""
    z = np.asarray(r, dtype=float) - np.asarray(var, dtype=float)
    out = z * (tau - (z < 0.0))
    return out if out.ndim else float(out)


def loss_matrix(panel) -> LossMatrix:
    losses = quantile_loss(panel.realized[:, None], panel.var, panel.tau)
    return LossMatrix(np.atleast_2d(losses).reshape(panel.var.shape), list(panel.model_ids), panel.tau)


def _ar_lstsq(y: np.ndarray, p: int, max_lag: int):
    n = y.size
    target = y[max_lag:]
    cols = [np.ones(n - max_lag)] + [y[max_lag - k : n - k] for k in range(1, p + 1)]
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ coef
    return X, coef, resid


def _significant_lag(series: np.ndarray, max_lag: int) -> int:
    """Largest significant lag of the BIC-selected AR(p); 0 when none."""
    y = np.asarray(series, dtype=float)
    if np.ptp(y) == 0.0:
        return 0
    n_eff = y.size - max_lag
    best = None
    for p in range(max_lag + 1):
        X, coef, resid = _ar_lstsq(y, p, max_lag)
        rss = float(resid @ resid)
        if rss <= 0.0:
            return p
        bic = n_eff * math.log(rss / n_eff) + (p + 1) * math.log(n_eff)
        if best is None or bic < best[0]:
            best = (bic, p, X, coef, rss)
    _, p, X, coef, rss = best
    if p == 0:
        return 0
    sigma2 = rss / (n_eff - p - 1)
    cov = sigma2 * np.linalg.pinv(X.T @ X)
    tstats = coef[1:] / np.sqrt(np.maximum(np.diag(cov)[1:], 1e-300))
    significant = np.flatnonzero(np.abs(tstats) > 1.96)
    return int(significant[-1] + 1) if significant.size else 0


def block_length(d_series, max_block_lag: int = 10) -> int:
    """Block length from AR fits of the loss differentials; floors at 1.

    ``d_series`` is a 2-D array with one differential series per column (or
    a 1-D array for a single series).
    """
    d = np.asarray(d_series, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    if d.shape[0] < 20:
        raise ValueError("differential series need at least 20 observations")
    max_lag = min(max_block_lag, d.shape[0] // 4)
    k = max((_significant_lag(d[:, j], max_lag) for j in range(d.shape[1])), default=0)
    return max(int(k), 1)


def pairwise_differentials(losses: np.ndarray) -> np.ndarray:
    m = losses.shape[1]
    pairs = list(combinations(range(m), 2))
    if not pairs:
        return np.empty((losses.shape[0], 0))
    return np.column_stack([losses[:, i] - losses[:, j] for i, j in pairs])


def bootstrap_indices(n: int, k: int, B: int, seed) -> np.ndarray:
    """``B`` block-bootstrap index rows of length ``n`` (0-based).

    Each row is ``n // k - 1`` blocks of ``k`` consecutive indices with
    uniform starting points, wrapping past the end of the sample, followed
    by ``n - k*v`` uniform single indices.
    """
    if not 1 <= k < n:
        raise ValueError(f"need n > k >= 1, got n={n}, k={k}")
    v = n // k - 1
    extra = n - k * v
    rng = np.random.default_rng(seed)
    out = np.empty((B, n), dtype=np.int64)
    offsets = np.arange(k)[:, None]
    for b in range(B):
        starts = rng.integers(0, n, size=v)
        blocks = (starts[None, :] + offsets) % n  # k x v, column j is block j
        out[b, : k * v] = blocks.ravel(order="F")
        out[b, k * v :] = rng.integers(0, n, size=extra)
    return out


def bootstrap_variance(d, indices: np.ndarray) -> float:
    """Bootstrap variance of the mean of ``d`` around its full-sample mean."""
    d = np.asarray(d, dtype=float)
    boot_means = d[indices].mean(axis=1)
    return float(np.mean((boot_means - d.mean()) ** 2))


def _resample_means(losses: np.ndarray, indices: np.ndarray) -> np.ndarray:
    n = losses.shape[0]
    counts = np.stack([np.bincount(row, minlength=n) for row in indices])
    return counts @ losses / n


class _PairStats:
    """Standardized loss differentials for a subset of models."""

    def __init__(self, loss_means: np.ndarray, boot_means: np.ndarray, subset: list[int]):
        lm = loss_means[subset]
        bm = boot_means[:, subset]
        self.dbar = lm[:, None] - lm[None, :]
        centered = (bm[:, :, None] - bm[:, None, :]) - self.dbar
        self.var = np.mean(centered**2, axis=0)
        self.valid = self.var > 0.0
        np.fill_diagonal(self.valid, False)
        safe = np.sqrt(np.where(self.valid, self.var, 1.0))
        self.t = np.where(self.valid, self.dbar / safe, 0.0)
        self.boot_t = np.where(self.valid, np.abs(centered) / safe, 0.0)

    def t_r(self) -> tuple[float, tuple[int, int]]:
        if not self.valid.any():
            raise NoValidPairError("no pair with positive bootstrap variance")
        abs_t = np.where(self.valid, np.abs(self.t), -np.inf)
        i, j = np.unravel_index(int(np.argmax(abs_t)), abs_t.shape)
        return float(abs_t[i, j]), (int(i), int(j))

    def pvalue(self, t_r: float) -> float:
        boot_max = self.boot_t.reshape(self.boot_t.shape[0], -1).max(axis=1)
        return float(np.mean(boot_max > t_r))

    def worst(self) -> int:
        sup = np.where(self.valid, self.t, -np.inf).max(axis=1)
        return int(np.argmax(sup))


def t_r_statistic(losses, indices: np.ndarray) -> tuple[float, tuple[int, int]]:
    """Range statistic over all model pairs and the pair attaining it."""
    L = np.asarray(losses, dtype=float)
    stats = _PairStats(L.mean(axis=0), _resample_means(L, indices), list(range(L.shape[1])))
    return stats.t_r()


def mcs_run(losses: LossMatrix, config: MCSConfig | None = None) -> MCSResult:
    """Sequential elimination until equal predictive ability is not rejected."""
    config = config or MCSConfig()
    L = losses.losses
    n, m = L.shape
    if m < 2:
        raise ValueError("MCS needs at least two models")
    if n < 50:
        raise ValueError("MCS needs at least 50 observations")
    k = block_length(pairwise_differentials(L), config.max_block_lag)
    indices = bootstrap_indices(n, k, config.B, config.seed)
    loss_means = L.mean(axis=0)
    boot_means = _resample_means(L, indices)

    alive = list(range(m))
    eliminated: list[tuple[str, float, float]] = []
    pvalues: dict[str, float] = {}
    running = 0.0
    final = 1.0
    while len(alive) > 1:
        stats = _PairStats(loss_means, boot_means, alive)
        try:
            t_r, _ = stats.t_r()
        except NoValidPairError:
            final = 1.0
            break
        p = stats.pvalue(t_r)
        running = max(running, p)
        if p >= config.alpha:
            final = running
            break
        worst = alive[stats.worst()]
        eliminated.append((losses.model_ids[worst], t_r, p))
        pvalues[losses.model_ids[worst]] = running
        alive.remove(worst)
    else:
        final = 1.0
    survivors = [losses.model_ids[i] for i in alive]
    for mid in survivors:
        pvalues[mid] = final
    return MCSResult(survivors, eliminated, k, final, pvalues)


def write_mcs(result: MCSResult, all_ids: list[str], json_path, extra: dict | None = None) -> list[Path]:
    """JSON trace plus a per-model survival CSV with regressor-set composition."""
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    payload = {**result.to_dict(), **(extra or {})}
    json_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    csv_path = json_path.with_suffix(".csv")
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_id", "survives", "mcs_pvalue"])
        for mid in all_ids:
            w.writerow([mid, int(mid in result.surviving_ids), repr(result.pvalues.get(mid, float("nan")))])
    return [json_path, csv_path]
