"""Maximum-likelihood fitting on an unconstrained reparameterization.

Parameters are mapped onto R^k with logs, tanh and nested logistic maps so a
derivative-free simplex search can run without bound handling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import distributions as dist
from .distributions import LawKind
from .volatility import (
    Dynamics,
    ParamVector,
    RegressorKind,
    RegressorSet,
    check_constraints,
    penalized_log_likelihood,
    resolve_law,
)

__all__ = [
    "FitConfig",
    "FittedModel",
    "EstimationError",
    "DegenerateDataError",
    "ModelSpec",
    "to_unconstrained",
    "from_unconstrained",
    "n_free_params",
    "canonical_start",
    "regressor_scales",
    "fit",
]

_TINY = 1e-300
_PENALTY = 1e10


class EstimationError(RuntimeError):
    pass


class DegenerateDataError(EstimationError, ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    dynamics: Dynamics
    law: LawKind
    regressors: RegressorKind

    def __post_init__(self) -> None:
        object.__setattr__(self, "dynamics", Dynamics(self.dynamics))
        object.__setattr__(self, "law", LawKind(self.law))
        object.__setattr__(self, "regressors", RegressorKind(self.regressors))

    @property
    def model_id(self) -> str:
        return f"{self.dynamics.value}-{self.law.value}-{self.regressors.value}"

    @classmethod
    def parse(cls, model_id: str) -> "ModelSpec":
        dyn, law, reg = model_id.split("-")
        return cls(Dynamics(dyn), LawKind(law), RegressorKind(reg))


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 5000
    tolerance: float = 1e-8
    starts: int = 1
    seed: int = 0
    min_obs: int = 100

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if self.starts < 1:
            raise ValueError("starts must be >= 1")


@dataclass(frozen=True)
class FittedModel:
    spec: ModelSpec
    params: ParamVector
    loglik: float
    aic: float
    bic: float
    n_obs: int
    regressor_scales: tuple[float, ...]
    converged: bool
    presample_return: float
    initial_variance: float
    trace: tuple[float, ...] = field(default=(), repr=False, compare=False)

    @property
    def model_id(self) -> str:
        return self.spec.model_id

    @property
    def n_params(self) -> int:
        return n_free_params(self.spec.dynamics, self.spec.law, len(self.params.delta))

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "params": self.params.as_dict(),
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "n_obs": self.n_obs,
            "n_params": self.n_params,
            "regressor_scales": list(self.regressor_scales),
            "converged": self.converged,
            "presample_return": self.presample_return,
            "initial_variance": self.initial_variance,
        }


def n_free_params(dynamics: Dynamics, law: LawKind, n_delta: int) -> int:
    k = 5 + n_delta  # mu, phi, omega, alpha, beta
    if Dynamics(dynamics).has_leverage:
        k += 1
    if LawKind(law) is not LawKind.GAUSSIAN:
        k += 1
    return k


def _logit(p: float) -> float:
    return float(special.logit(min(max(p, _TINY), np.nextafter(1.0, 0.0))))


def _law_kind(law) -> LawKind:
    return law.kind if isinstance(law, dist.ErrorLaw) else LawKind(law)


def to_unconstrained(params: ParamVector, dynamics: Dynamics, law) -> np.ndarray:
    dynamics = Dynamics(dynamics)
    kind = _law_kind(law)
    p = params
    u = [p.mu, math.atanh(min(max(p.phi, -1 + 1e-16), 1 - 1e-16))]
    if dynamics is Dynamics.EGARCH:
        u.append(p.omega)
        u.extend(p.delta)
        u.extend([p.alpha, math.atanh(min(max(p.beta, -1 + 1e-16), 1 - 1e-16)), p.gamma])
    else:
        u.append(math.log(max(p.omega, _TINY)))
        u.extend(math.log(max(d, _TINY)) for d in p.delta)
        total = p.alpha + p.beta
        share = p.alpha / total if total > 0.0 else 0.5
        if dynamics is Dynamics.GARCH:
            u.extend([_logit(total), _logit(share)])
        else:
            pneg = dist.prob_negative(resolve_law(kind, p))
            cap = 1.0 - pneg * p.gamma
            u.extend([_logit(p.gamma), _logit(total / cap), _logit(share)])
    if kind is LawKind.STUDENT_T:
        u.append(math.log(max(p.nu - dist.STUDENT_MIN_SHAPE, _TINY)))
    elif kind is LawKind.GED:
        u.append(math.log(p.nu))
    return np.asarray(u, dtype=float)


def _shape_from(kind: LawKind, u: float) -> float | None:
    if kind is LawKind.STUDENT_T:
        return dist.STUDENT_MIN_SHAPE + math.exp(min(u, 700.0))
    if kind is LawKind.GED:
        return math.exp(min(u, 700.0))
    return None


def from_unconstrained(u, dynamics: Dynamics, law, n_delta: int) -> ParamVector:
    dynamics = Dynamics(dynamics)
    kind = _law_kind(law)
    u = [float(x) for x in u]
    mu, phi = u[0], math.tanh(u[1])
    i = 2
    nu = _shape_from(kind, u[-1]) if kind is not LawKind.GAUSSIAN else None
    if dynamics is Dynamics.EGARCH:
        omega = u[i]
        delta = tuple(u[i + 1 : i + 1 + n_delta])
        i += 1 + n_delta
        alpha, beta, gamma = u[i], math.tanh(u[i + 1]), u[i + 2]
        return ParamVector(mu, phi, omega, alpha, beta, gamma, delta, nu)
    omega = math.exp(min(u[i], 700.0))
    delta = tuple(math.exp(min(x, 700.0)) for x in u[i + 1 : i + 1 + n_delta])
    i += 1 + n_delta
    if dynamics is Dynamics.GARCH:
        total = float(special.expit(u[i]))
        share = float(special.expit(u[i + 1]))
        gamma = 0.0
    else:
        gamma = float(special.expit(u[i]))
        pneg = dist.prob_negative(dist.ErrorLaw(kind, nu))
        total = (1.0 - pneg * gamma) * float(special.expit(u[i + 1]))
        share = float(special.expit(u[i + 2]))
    alpha = total * share
    beta = total - alpha
    return ParamVector(mu, phi, omega, alpha, beta, gamma, delta, nu)


def regressor_scales(regressors: RegressorSet) -> np.ndarray:
    """Per-column standard deviations; constant columns get scale 1."""
    if regressors.n_columns == 0:
        return np.zeros(0)
    sd = np.std(regressors.series, axis=0)
    return np.where(sd > 0.0, sd, 1.0)


def canonical_start(returns: np.ndarray, dynamics: Dynamics, law, n_delta: int) -> ParamVector:
    dynamics = Dynamics(dynamics)
    kind = _law_kind(law)
    r = np.asarray(returns, dtype=float)
    var = float(np.var(r))
    dev = r - r.mean()
    denom = float(np.dot(dev, dev))
    rho = float(np.dot(dev[1:], dev[:-1]) / denom) if denom > 0.0 else 0.0
    phi = min(max(rho, -0.5 + 1e-6), 0.5 - 1e-6)
    beta = 0.90
    if dynamics is Dynamics.EGARCH:
        omega = (1.0 - beta) * math.log(var)
        delta = (0.0,) * n_delta
    else:
        omega = 0.05 * var
        delta = (0.01 * omega,) * n_delta
    gamma = 0.0 if dynamics is Dynamics.GARCH else 0.05
    nu = {LawKind.GAUSSIAN: None, LawKind.STUDENT_T: 8.0, LawKind.GED: 1.5}[kind]
    return ParamVector(float(r.mean()), phi, omega, 0.05, beta, gamma, delta, nu)


def _simplex(u0: np.ndarray, step: float = 0.25) -> np.ndarray:
    k = u0.size
    sim = np.tile(u0, (k + 1, 1))
    sim[1:] += step * np.eye(k)
    return sim


def _nelder_mead(objective, u0: np.ndarray, config: FitConfig, f_scale: float, step: float = 0.25):
    """Simplex search restarted from its own optimum until it stops improving."""
    trace: list[float] = []
    x = u0
    fx = objective(x)
    trace.append(fx)
    success = False
    budget = config.max_iterations
    for _ in range(5):
        if budget <= 0:
            break
        res = optimize.minimize(
            objective,
            x,
            method="Nelder-Mead",
            callback=lambda intermediate_result: trace.append(float(intermediate_result.fun)),
            options={
                "maxiter": budget,
                "xatol": 1e-6,
                "fatol": config.tolerance * f_scale,
                "adaptive": x.size > 6,
                "initial_simplex": _simplex(x, step),
            },
        )
        budget -= int(res.nit)
        improved = fx - res.fun
        if res.fun <= fx:
            x, fx = res.x, float(res.fun)
        success = bool(res.success)
        if not success or improved <= config.tolerance * f_scale:
            break
    return x, fx, success and budget >= 0, trace


def fit(
    dynamics: Dynamics,
    law,
    regressors: RegressorSet | None,
    returns,
    config: FitConfig | None = None,
    start: ParamVector | None = None,
) -> FittedModel:
    """Fit one specification by maximum likelihood.

    Regressor columns are divided by their in-sample standard deviation
    before estimation; the scales are stored on the result so forecasts
    can reuse them.

    ``start`` (for instance the previous window's estimate in a rolling
    exercise) replaces the canonical starting point when it is feasible;
    the search then begins with a tighter simplex.
    """
    config = config or FitConfig()
    dynamics = Dynamics(dynamics)
    kind = _law_kind(law)
    regressors = regressors if regressors is not None else RegressorSet.none()
    r = np.asarray(returns, dtype=float)
    n = r.size
    if n < config.min_obs:
        raise EstimationError(f"need at least {config.min_obs} observations, got {n}")
    if not np.all(np.isfinite(r)):
        raise EstimationError("returns contain non-finite values")
    if not np.var(r) > 0.0:
        raise DegenerateDataError("returns have zero variance")
    n_delta = regressors.n_columns
    if n_delta and regressors.series.shape[0] != n:
        raise ValueError("regressor rows must match returns")
    scales = regressor_scales(regressors)
    x_scaled = regressors.scaled(scales)
    r0, s2_0 = float(np.mean(r)), float(np.var(r))

    def loglik_at(u) -> float:
        try:
            params = from_unconstrained(u, dynamics, kind, n_delta)
        except (OverflowError, ValueError, dist.ShapeError):
            return -math.inf
        return penalized_log_likelihood(dynamics, kind, params, r, x_scaled, r0, s2_0)

    def objective(u) -> float:
        ll = loglik_at(u)
        return -ll / n if math.isfinite(ll) else _PENALTY

    u_start = to_unconstrained(canonical_start(r, dynamics, kind, n_delta), dynamics, kind)
    step = 0.25
    if start is not None and len(start.delta) == n_delta:
        try:
            u_warm = to_unconstrained(start, dynamics, kind)
        except (ValueError, OverflowError):
            u_warm = None
        if u_warm is not None and np.all(np.isfinite(u_warm)) and objective(u_warm) < _PENALTY:
            u_start, step = u_warm, 0.05
    rng = np.random.default_rng(config.seed)
    starts = [u_start] + [u_start + rng.normal(0.0, 0.5, u_start.size) for _ in range(config.starts - 1)]
    f_scale = max(abs(objective(u_start)), 1.0)

    runs = []
    for u0 in starts:
        u, fval, ok, trace = _nelder_mead(objective, u0, config, f_scale, step)
        if fval < _PENALTY:
            runs.append((fval, float(np.linalg.norm(u)), u, ok, trace))
    if not runs:
        raise EstimationError(f"all {len(starts)} starts diverged for {dynamics.value}/{kind.value}")
    runs.sort(key=lambda item: (item[0], item[1]))
    fval, _, u_best, ok, trace = runs[0]
    params = from_unconstrained(u_best, dynamics, kind, n_delta)
    loglik = loglik_at(u_best)
    try:
        check_constraints(dynamics, kind, params, n_delta)
    except ValueError:
        ok = False
    k = n_free_params(dynamics, kind, n_delta)
    return FittedModel(
        spec=ModelSpec(dynamics, kind, regressors.kind),
        params=params,
        loglik=loglik,
        aic=2.0 * k - 2.0 * loglik,
        bic=k * math.log(n) - 2.0 * loglik,
        n_obs=n,
        regressor_scales=tuple(float(s) for s in scales),
        converged=bool(ok),
        presample_return=r0,
        initial_variance=s2_0,
        trace=tuple(-f * n for f in trace),
    )
