"""Static and dynamic (exponentially smoothed softmax) VaR combinations."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy import optimize, special

from .mcs import quantile_loss

__all__ = [
    "WeightSeries",
    "CombinedVaR",
    "KappaFit",
    "static_average",
    "normalized_kernel",
    "dynamic_weights",
    "combine",
    "optimize_kappa",
    "combined_loss",
    "write_combined",
]

KAPPA_EPS = 1e-4


@dataclass(frozen=True)
class WeightSeries:
    weights: np.ndarray
    kappa: np.ndarray


@dataclass(frozen=True)
class CombinedVaR:
    var_dyn: np.ndarray
    var_avg: np.ndarray


@dataclass(frozen=True)
class KappaFit:
    kappa: np.ndarray
    loss: float
    converged: bool


def static_average(var_panel) -> np.ndarray:
    return np.asarray(var_panel, dtype=float).mean(axis=1)


def normalized_kernel(r_t: float, var_row, sigma_row, tau: float, sign: int = -1) -> np.ndarray:
    """Softmax of ``sign * loss / sigma`` across models.

    ``sign=-1`` favours models with small scaled loss; ``sign=+1`` is the
    literal kernel that puts more weight on the larger losses.
    """
    sigma_row = np.asarray(sigma_row, dtype=float)
    if np.any(~(sigma_row > 0.0)):
        raise ValueError("sigma must be positive")
    score = sign * quantile_loss(r_t, var_row, tau) / sigma_row
    return special.softmax(score)


def dynamic_weights(var_panel, realized, sigma2_hat, kappa, tau: float, sign: int = -1) -> WeightSeries:
    """Weight path; row ``t`` applies to the forecast of ``r_t`` and uses data to ``t-1``.

    With model-specific smoothing constants the recursion does not preserve
    the unit sum on its own, so each row is renormalized onto the simplex.
    ``kappa = 1`` freezes a model's weight (the limit of the smoothing).
    """
    V = np.asarray(var_panel, dtype=float)
    r = np.asarray(realized, dtype=float)
    S = np.sqrt(np.asarray(sigma2_hat, dtype=float))
    T, m = V.shape
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), (m,)).copy()
    if r.shape != (T,) or S.shape != V.shape:
        raise ValueError("panel, realized and sigma2_hat dimensions disagree")
    if np.any((kappa <= 0.0) | (kappa > 1.0)):
        raise ValueError("kappa must lie in (0, 1]")
    if np.any(~(S > 0.0)):
        raise ValueError("sigma2_hat must be positive")
    scores = sign * quantile_loss(r[:, None], V, tau) / S
    kernel = special.softmax(scores, axis=1)
    return WeightSeries(_weight_path(kappa, kernel), kappa)


@njit(cache=True)
def _weight_path(kappa, kernel):
    T, m = kernel.shape
    W = np.empty((T, m))
    W[0, :] = 1.0 / m
    for t in range(1, T):
        total = 0.0
        for j in range(m):
            W[t, j] = kappa[j] * W[t - 1, j] + (1.0 - kappa[j]) * kernel[t - 1, j]
            total += W[t, j]
        for j in range(m):
            W[t, j] /= total
    return W


def combine(var_panel, weights) -> np.ndarray:
    W = weights.weights if isinstance(weights, WeightSeries) else np.asarray(weights, dtype=float)
    return np.einsum("tj,tj->t", W, np.asarray(var_panel, dtype=float))


def combined_loss(var_panel, realized, sigma2_hat, kappa, tau: float, sign: int = -1) -> float:
    W = dynamic_weights(var_panel, realized, sigma2_hat, kappa, tau, sign)
    return float(np.mean(quantile_loss(realized, combine(var_panel, W), tau)))


def _kappa_from(u: np.ndarray) -> np.ndarray:
    return KAPPA_EPS + (1.0 - 2.0 * KAPPA_EPS) * special.expit(u)


def _kappa_to(kappa: np.ndarray) -> np.ndarray:
    return special.logit((np.asarray(kappa) - KAPPA_EPS) / (1.0 - 2.0 * KAPPA_EPS))


def optimize_kappa(
    var_panel,
    realized,
    sigma2_hat,
    tau: float,
    sign: int = -1,
    *,
    train: slice | None = None,
    max_iterations: int = 4000,
) -> KappaFit:
    """Smoothing constants minimizing the average pinball loss of the combination.

    Nelder-Mead on a logistic map of ``(eps, 1-eps)^m``, started from the
    uniform points 0.5, 0.9 and 0.99. The limit ``kappa = 1``, which pins
    the weights at ``1/m`` and reproduces the static average, is evaluated
    too and kept when no interior point beats it. ``train`` restricts the objective to a
    sub-horizon so the remainder can be used for honest evaluation.
    """
    V = np.asarray(var_panel, dtype=float)
    r = np.asarray(realized, dtype=float)
    S2 = np.asarray(sigma2_hat, dtype=float)
    if train is not None:
        V, r, S2 = V[train], r[train], S2[train]
    T, m = V.shape
    if m == 1:
        kappa = np.array([0.5])
        return KappaFit(kappa, combined_loss(V, r, S2, kappa, tau, sign), True)
    if T < 50:
        raise ValueError("kappa optimization needs a horizon of at least 50")

    def objective(u):
        return combined_loss(V, r, S2, _kappa_from(u), tau, sign)

    # the frozen limit kappa = 1 (uniform weights, i.e. the static average) is always a candidate
    frozen = np.ones(m)
    best = (combined_loss(V, r, S2, frozen, tau, sign), tuple(frozen), True)
    for k0 in (0.5, 0.9, 0.99):
        u0 = _kappa_to(np.full(m, k0))
        res = optimize.minimize(
            objective,
            u0,
            method="Nelder-Mead",
            options={"maxiter": max_iterations, "xatol": 1e-6, "fatol": 1e-12, "adaptive": m > 4},
        )
        cand = (float(res.fun), tuple(_kappa_from(res.x)), bool(res.success))
        if cand[0] < best[0]:
            best = cand
    loss, kappa, ok = best
    return KappaFit(np.asarray(kappa), loss, ok)


def write_combined(timestamps, realized, combined: CombinedVaR, csv_path, metadata: dict) -> list[Path]:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "realized", "var_avg", "var_dyn"])
        for t in range(len(realized)):
            w.writerow(
                [int(timestamps[t]), repr(float(realized[t])), repr(float(combined.var_avg[t])),
                 repr(float(combined.var_dyn[t]))]
            )
    json_path = csv_path.with_suffix(".json")
    json_path.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [csv_path, json_path]
