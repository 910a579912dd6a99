"""Rolling one-step-ahead variance and VaR forecasts."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import distributions as dist
from .estimation import EstimationError, FitConfig, FittedModel, ModelSpec, fit
from .volatility import (
    ConstraintError,
    Dynamics,
    FilterError,
    FilterOutput,
    RegressorSet,
    filter_returns,
    resolve_law,
)

__all__ = [
    "RollConfig",
    "VaRPanel",
    "RollResult",
    "forecast_one_step",
    "var_forecast",
    "rolling_run",
    "write_panel",
    "read_panel",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RollConfig:
    insample_fraction: float = 0.5
    refit_every: int = 100
    taus: tuple[float, ...] = (0.01, 0.001)

    def __post_init__(self) -> None:
        if not 0.0 < self.insample_fraction < 1.0:
            raise ValueError("insample_fraction must lie in (0, 1)")
        if self.refit_every < 1:
            raise ValueError("refit_every must be positive")
        taus = tuple(float(t) for t in self.taus)
        if not taus or any(not 0.0 < t < 0.5 for t in taus):
            raise ValueError("taus must be non-empty and inside (0, 0.5)")
        object.__setattr__(self, "taus", taus)


@dataclass
class VaRPanel:
    """Out-of-sample VaR forecasts for one tau; ``var[t, j]`` uses data up to t-1."""

    timestamps: np.ndarray
    realized: np.ndarray
    var: np.ndarray
    sigma2_hat: np.ndarray
    tau: float
    model_ids: list[str]

    def __post_init__(self) -> None:
        self.var = np.asarray(self.var, dtype=float).reshape(len(self.realized), -1)
        self.sigma2_hat = np.asarray(self.sigma2_hat, dtype=float).reshape(self.var.shape)
        if self.var.shape[1] != len(self.model_ids):
            raise ValueError("column count must equal the number of model ids")

    @property
    def n_models(self) -> int:
        return len(self.model_ids)

    def select(self, model_ids) -> "VaRPanel":
        idx = [self.model_ids.index(m) for m in model_ids]
        return VaRPanel(
            self.timestamps, self.realized, self.var[:, idx], self.sigma2_hat[:, idx], self.tau, list(model_ids)
        )

    def window(self, start: int | None, stop: int | None) -> "VaRPanel":
        return VaRPanel(
            self.timestamps[start:stop],
            self.realized[start:stop],
            self.var[start:stop],
            self.sigma2_hat[start:stop],
            self.tau,
            list(self.model_ids),
        )


@dataclass
class RollResult:
    panels: dict[float, VaRPanel]
    fits: dict[str, list[FittedModel]]
    failures: dict[str, str] = field(default_factory=dict)


def forecast_one_step(
    fitted: FittedModel, state: FilterOutput, r_t: float, x_next=None
) -> tuple[float, float]:
    """Mean and variance of ``r_{t+1}`` given the filter state through ``t``.

    ``x_next`` is the raw (unscaled) covariate row for ``t+1``; the scales
    stored on ``fitted`` are applied here.
    """
    p = fitted.params
    dyn = fitted.spec.dynamics
    eps_t, s2_t = float(state.eps[-1]), float(state.sigma2[-1])
    xd = 0.0
    if p.delta:
        x = np.asarray(x_next, dtype=float) / np.asarray(fitted.regressor_scales)
        xd = float(np.dot(x, p.delta))
    if dyn is Dynamics.EGARCH:
        elaw = resolve_law(fitted.spec.law, p)
        z = eps_t / math.sqrt(s2_t)
        log_s2 = p.omega + xd + p.alpha * z + p.gamma * (abs(z) - dist.abs_moment(elaw)) + p.beta * math.log(s2_t)
        s2 = math.exp(log_s2)
    else:
        s2 = p.omega + xd + p.alpha * eps_t**2 + p.beta * s2_t
        if dyn is Dynamics.GJR and eps_t <= 0.0:
            s2 += p.gamma * eps_t**2
    if not (math.isfinite(s2) and s2 > 0.0):
        raise FilterError(-1, "non-finite variance forecast")
    return p.mu + p.phi * float(r_t), s2


def var_forecast(mu, sigma2, law: dist.ErrorLaw, tau: float):
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(~(sigma2 > 0.0)):
        raise ValueError("sigma2 must be positive")
    out = np.asarray(mu, dtype=float) + np.sqrt(sigma2) * dist.quantile(law, tau)
    return out if out.ndim else float(out)


def _roll_one(
    spec: ModelSpec,
    returns: np.ndarray,
    regressors: RegressorSet,
    window: int,
    refit_every: int,
    fit_config: FitConfig,
) -> tuple[np.ndarray, np.ndarray, list[FittedModel]]:
    n = returns.size
    mu_hat = np.empty(n - window)
    s2_hat = np.empty(n - window)
    fits: list[FittedModel] = []
    for block_start in range(window, n, refit_every):
        block_stop = min(block_start + refit_every, n)
        lo = block_start - window
        warm = fits[-1].params if fits else None
        fitted = fit(
            spec.dynamics, spec.law, regressors.slice(lo, block_start), returns[lo:block_start], fit_config, warm
        )
        fits.append(fitted)
        # Running the frozen filter through the block gives exactly the
        # sequence of one-step forecasts: sigma2[t] only uses data up to t-1.
        span = regressors.slice(lo, block_stop).scaled(np.asarray(fitted.regressor_scales))
        out = filter_returns(
            spec.dynamics,
            spec.law,
            fitted.params,
            returns[lo:block_stop],
            span,
            presample_return=fitted.presample_return,
            initial_variance=fitted.initial_variance,
        )
        lagged = returns[block_start - 1 : block_stop - 1]
        sl = slice(block_start - window, block_stop - window)
        mu_hat[sl] = fitted.params.mu + fitted.params.phi * lagged
        s2_hat[sl] = out.sigma2[window:]
    return mu_hat, s2_hat, fits


def rolling_run(
    specs: list[ModelSpec],
    returns,
    regressors: dict,
    config: RollConfig,
    fit_config: FitConfig | None = None,
    timestamps=None,
) -> RollResult:
    """Rolling-window forecasts for every spec; failed models are dropped, not zero-filled.

    ``regressors`` maps a :class:`RegressorKind` (or its string value) to a
    :class:`RegressorSet` aligned with ``returns``.
    """
    fit_config = fit_config or FitConfig()
    r = np.asarray(returns, dtype=float)
    n = r.size
    window = int(math.floor(config.insample_fraction * n))
    if window < fit_config.min_obs or window >= n:
        raise ValueError(f"in-sample window of {window} bars is unusable for n={n}")
    ts = np.arange(n) if timestamps is None else np.asarray(timestamps)
    ids, mus, s2s, laws = [], [], [], []
    fits: dict[str, list[FittedModel]] = {}
    failures: dict[str, str] = {}
    for spec in specs:
        regs = regressors.get(spec.regressors, regressors.get(spec.regressors.value))
        if regs is None:
            regs = RegressorSet.none() if spec.regressors.value == "N" else None
        if regs is None:
            failures[spec.model_id] = "regressors unavailable"
            continue
        try:
            mu_hat, s2_hat, model_fits = _roll_one(spec, r, regs, window, config.refit_every, fit_config)
        except (EstimationError, ConstraintError, FilterError, ValueError) as exc:
            log.warning("dropping %s: %s", spec.model_id, exc)
            failures[spec.model_id] = str(exc)
            continue
        ids.append(spec.model_id)
        mus.append(mu_hat)
        s2s.append(s2_hat)
        laws.append([resolve_law(spec.law, f.params) for f in model_fits])
        fits[spec.model_id] = model_fits
    panels = {}
    m = len(ids)
    for tau in config.taus:
        var = np.empty((n - window, m))
        for j in range(m):
            for b, law in enumerate(laws[j]):
                sl = slice(b * config.refit_every, (b + 1) * config.refit_every)
                var[sl, j] = var_forecast(mus[j][sl], s2s[j][sl], law, tau)
        sigma2 = np.column_stack(s2s) if m else np.empty((n - window, 0))
        panels[tau] = VaRPanel(ts[window:], r[window:], var, sigma2, tau, list(ids))
    return RollResult(panels, fits, failures)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_panel(panel: VaRPanel, csv_path, metadata: dict | None = None) -> list[Path]:
    """CSV ``timestamp,realized,<model_id>...`` plus a JSON sidecar."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "realized", *panel.model_ids])
        for t in range(len(panel.realized)):
            w.writerow([int(panel.timestamps[t]), _fmt(panel.realized[t]), *map(_fmt, panel.var[t])])
    sigma_path = csv_path.with_name(csv_path.stem + "_sigma2.csv")
    with sigma_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *panel.model_ids])
        for t in range(len(panel.realized)):
            w.writerow([int(panel.timestamps[t]), *map(_fmt, panel.sigma2_hat[t])])
    meta_path = csv_path.with_suffix(".json")
    meta = {"tau": panel.tau, "model_ids": panel.model_ids, **(metadata or {})}
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [csv_path, sigma_path, meta_path]


def read_panel(csv_path) -> VaRPanel:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text(encoding="utf-8"))
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    sig = np.loadtxt(csv_path.with_name(csv_path.stem + "_sigma2.csv"), delimiter=",", skiprows=1, ndmin=2)
    return VaRPanel(data[:, 0].astype(np.int64), data[:, 1], data[:, 2:], sig[:, 1:], meta["tau"], meta["model_ids"])
