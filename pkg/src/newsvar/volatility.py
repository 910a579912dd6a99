"""AR(1) conditional mean with GARCH / EGARCH / GJR(1,1) variance dynamics.

Exogenous covariates enter the variance equation linearly (inside the log for
EGARCH). The recursions are compiled with numba; everything else is numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numba import njit

from . import distributions as dist
from .distributions import ErrorLaw, LawKind

__all__ = [
    "Dynamics",
    "RegressorKind",
    "RegressorSet",
    "ParamVector",
    "FilterOutput",
    "ConstraintError",
    "FilterError",
    "resolve_law",
    "check_constraints",
    "filter_returns",
    "log_likelihood",
    "penalized_log_likelihood",
    "simulate",
]


class Dynamics(str, Enum):
    GARCH = "GARCH"
    EGARCH = "EGARCH"
    GJR = "GJR"

    @property
    def has_leverage(self) -> bool:
        return self is not Dynamics.GARCH


_DYN_CODE = {Dynamics.GARCH: 0, Dynamics.EGARCH: 1, Dynamics.GJR: 2}


class RegressorKind(str, Enum):
    N = "N"
    IV = "IV"
    SE = "SE"

    @property
    def columns(self) -> tuple[str, ...]:
        return _REGRESSOR_COLUMNS[self]


_REGRESSOR_COLUMNS = {
    RegressorKind.N: (),
    RegressorKind.IV: ("numb", "lagvol"),
    RegressorKind.SE: ("pos", "neg", "high"),
}


class ConstraintError(ValueError):
    """Parameters violate the admissible region of the chosen dynamics."""


class FilterError(FloatingPointError):
    def __init__(self, index: int, message: str = "non-finite conditional variance"):
        super().__init__(f"{message} at index {index}")
        self.index = index


@dataclass(frozen=True)
class RegressorSet:
    kind: RegressorKind
    series: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RegressorKind(self.kind))
        series = np.asarray(self.series, dtype=float)
        if series.ndim == 1:
            series = series[:, None]
        ncol = len(self.kind.columns)
        if ncol == 0:
            series = series.reshape(series.shape[0] if series.size else 0, 0)
        elif series.shape[1] != ncol:
            raise ValueError(f"{self.kind.value} regressors need {ncol} columns, got {series.shape[1]}")
        object.__setattr__(self, "series", series)

    @classmethod
    def none(cls) -> "RegressorSet":
        return cls(RegressorKind.N)

    @property
    def n_columns(self) -> int:
        return len(self.kind.columns)

    def slice(self, start: int | None, stop: int | None) -> "RegressorSet":
        if self.n_columns == 0:
            return self
        return RegressorSet(self.kind, self.series[start:stop])

    def scaled(self, scales: np.ndarray) -> "RegressorSet":
        if self.n_columns == 0:
            return self
        return RegressorSet(self.kind, self.series / np.asarray(scales, dtype=float))


@dataclass(frozen=True)
class ParamVector:
    mu: float
    phi: float
    omega: float
    alpha: float
    beta: float
    gamma: float = 0.0
    delta: tuple[float, ...] = ()
    nu: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))

    def replace(self, **changes) -> "ParamVector":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "mu": self.mu,
            "phi": self.phi,
            "omega": self.omega,
            "delta": list(self.delta),
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "nu": self.nu,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParamVector":
        return cls(
            mu=d["mu"],
            phi=d["phi"],
            omega=d["omega"],
            alpha=d["alpha"],
            beta=d["beta"],
            gamma=d.get("gamma", 0.0),
            delta=tuple(d.get("delta", ())),
            nu=d.get("nu"),
        )


@dataclass(frozen=True)
class FilterOutput:
    sigma2: np.ndarray
    eps: np.ndarray
    z: np.ndarray


def resolve_law(law, params: ParamVector) -> ErrorLaw:
    """Combine a law kind with the shape carried by ``params``."""
    kind = law.kind if isinstance(law, ErrorLaw) else LawKind(law)
    return ErrorLaw(kind, None if kind is LawKind.GAUSSIAN else params.nu)


def check_constraints(dynamics: Dynamics, law, params: ParamVector, n_regressors: int = 0) -> ErrorLaw:
    """Raise :class:`ConstraintError` unless ``params`` is admissible."""
    dynamics = Dynamics(dynamics)
    try:
        elaw = resolve_law(law, params)
    except dist.ShapeError as exc:
        raise ConstraintError(str(exc)) from exc
    p = params
    if len(p.delta) != n_regressors:
        raise ConstraintError(f"expected {n_regressors} delta coefficients, got {len(p.delta)}")
    values = [p.mu, p.phi, p.omega, p.alpha, p.beta, p.gamma, *p.delta]
    if not all(math.isfinite(v) for v in values):
        raise ConstraintError("non-finite parameter")
    if not abs(p.phi) < 1.0:
        raise ConstraintError(f"|phi| must be < 1, got {p.phi}")
    if dynamics is Dynamics.EGARCH:
        if not abs(p.beta) < 1.0:
            raise ConstraintError(f"EGARCH requires |beta| < 1, got {p.beta}")
        return elaw
    if p.omega <= 0.0:
        raise ConstraintError(f"omega must be positive, got {p.omega}")
    if any(d < 0.0 for d in p.delta):
        raise ConstraintError("delta must be non-negative for GARCH/GJR")
    if not (0.0 <= p.alpha < 1.0 and 0.0 <= p.beta < 1.0):
        raise ConstraintError(f"alpha, beta must lie in [0, 1), got {p.alpha}, {p.beta}")
    if dynamics is Dynamics.GARCH:
        if p.gamma != 0.0:
            raise ConstraintError("GARCH has no leverage term")
        if p.alpha + p.beta >= 1.0:
            raise ConstraintError(f"alpha + beta must be < 1, got {p.alpha + p.beta}")
    else:
        if not 0.0 <= p.gamma < 1.0:
            raise ConstraintError(f"gamma must lie in [0, 1), got {p.gamma}")
        persistence = p.alpha + p.beta + p.gamma * dist.prob_negative(elaw)
        if persistence >= 1.0:
            raise ConstraintError(f"alpha + beta + gamma*P(z<0) must be < 1, got {persistence}")
    return elaw


@njit(cache=True)
def _variance_path(code, eps, xd, omega, alpha, beta, gamma, eabs, s2_init):
    n = eps.shape[0]
    s2 = np.empty(n)
    s2[0] = s2_init
    if code == 1:
        ls = math.log(s2_init)
        for t in range(1, n):
            if not s2[t - 1] > 0.0:
                s2[t:] = np.nan
                break
            zt = eps[t - 1] / math.sqrt(s2[t - 1])
            ls = omega + xd[t] + alpha * zt + gamma * (abs(zt) - eabs) + beta * ls
            s2[t] = math.exp(ls)
    else:
        for t in range(1, n):
            e2 = eps[t - 1] * eps[t - 1]
            v = omega + xd[t] + alpha * e2 + beta * s2[t - 1]
            if code == 2 and eps[t - 1] <= 0.0:
                v += gamma * e2
            s2[t] = v
    return s2


@njit(cache=True)
def _simulate_path(code, z, xd, mu, phi, omega, alpha, beta, gamma, eabs, s2_init, r_init):
    n = z.shape[0]
    r = np.empty(n)
    s2 = s2_init
    ls = math.log(s2_init)
    r_prev = r_init
    eps_prev = 0.0
    for t in range(n):
        if t > 0:
            if code == 1:
                if not s2 > 0.0:
                    r[t:] = np.nan
                    break
                zp = eps_prev / math.sqrt(s2)
                ls = omega + xd[t] + alpha * zp + gamma * (abs(zp) - eabs) + beta * ls
                s2 = math.exp(ls)
            else:
                e2 = eps_prev * eps_prev
                v = omega + xd[t] + alpha * e2 + beta * s2
                if code == 2 and eps_prev <= 0.0:
                    v += gamma * e2
                s2 = v
        eps = math.sqrt(s2) * z[t]
        r[t] = mu + phi * r_prev + eps
        r_prev = r[t]
        eps_prev = eps
    return r


@njit(cache=True)
def _loglik_kernel(code, law_code, nu, lam, const, r, r0, mu, phi, xd, omega, alpha, beta, gamma, eabs, s2_init):
    # single pass of the filter and the density; -inf on any blow-up
    n = r.shape[0]
    s2 = s2_init
    ls = math.log(s2_init)
    eps_prev = 0.0
    r_prev = r0
    ll = 0.0
    for t in range(n):
        if t > 0:
            if code == 1:
                zp = eps_prev / math.sqrt(s2)
                ls = omega + xd[t] + alpha * zp + gamma * (abs(zp) - eabs) + beta * ls
                s2 = math.exp(ls)
            else:
                e2 = eps_prev * eps_prev
                s2 = omega + xd[t] + alpha * e2 + beta * s2
                if code == 2 and eps_prev <= 0.0:
                    s2 += gamma * e2
            if not (s2 > 0.0 and s2 < np.inf):
                return -np.inf
        eps = r[t] - mu - phi * r_prev
        z = eps / math.sqrt(s2)
        if law_code == 0:
            lp = const - 0.5 * z * z
        elif law_code == 1:
            lp = const - 0.5 * (nu + 1.0) * math.log1p(z * z / (nu - 2.0))
        else:
            lp = const - 0.5 * abs(z / lam) ** nu
        ll += lp - 0.5 * math.log(s2)
        eps_prev = eps
        r_prev = r[t]
    return ll


def penalized_log_likelihood(
    dynamics: Dynamics,
    law,
    params: ParamVector,
    returns: np.ndarray,
    regressors: RegressorSet | None,
    presample_return: float,
    initial_variance: float,
) -> float:
    """Same value as ``log_likelihood(..., penalize=True)`` from one compiled pass.

    Used inside optimizers where the per-call overhead of the general
    routine dominates.
    """
    dynamics = Dynamics(dynamics)
    try:
        elaw = check_constraints(dynamics, law, params, _n_cols(regressors))
    except ConstraintError:
        return -math.inf
    r = np.asarray(returns, dtype=float)
    xd = _regressor_contribution(params, regressors, r.shape[0])
    nu, lam = 0.0, 1.0
    if elaw.kind is LawKind.GAUSSIAN:
        law_code, const = 0, -0.5 * math.log(2.0 * math.pi)
    elif elaw.kind is LawKind.STUDENT_T:
        law_code, nu = 1, float(elaw.shape)
        const = math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu) - 0.5 * math.log(math.pi * (nu - 2.0))
    else:
        law_code, nu = 2, float(elaw.shape)
        lam = dist.ged_scale(nu)
        const = math.log(nu) - math.log(lam) - (1.0 + 1.0 / nu) * math.log(2.0) - math.lgamma(1.0 / nu)
    eabs = dist.abs_moment(elaw) if dynamics is Dynamics.EGARCH else 0.0
    ll = _loglik_kernel(
        _DYN_CODE[dynamics], law_code, nu, lam, const, r, float(presample_return), params.mu, params.phi,
        xd, params.omega, params.alpha, params.beta, params.gamma, eabs, float(initial_variance),
    )
    return ll if math.isfinite(ll) else -math.inf


def _regressor_contribution(params: ParamVector, regressors: RegressorSet | None, n: int) -> np.ndarray:
    if regressors is None or regressors.n_columns == 0:
        return np.zeros(n)
    x = regressors.series
    if x.shape[0] != n:
        raise ValueError(f"regressors have {x.shape[0]} rows but returns have {n}")
    return np.ascontiguousarray(x @ np.asarray(params.delta, dtype=float))


def _n_cols(regressors: RegressorSet | None) -> int:
    return 0 if regressors is None else regressors.n_columns


def filter_returns(
    dynamics: Dynamics,
    law,
    params: ParamVector,
    returns,
    regressors: RegressorSet | None = None,
    *,
    presample_return: float | None = None,
    initial_variance: float | None = None,
) -> FilterOutput:
    """Run the mean and variance recursions over ``returns``.

    ``presample_return`` and ``initial_variance`` default to the sample mean
    and (population) variance of ``returns``; pass them explicitly to
    continue a filter fitted on a different window.
    """
    dynamics = Dynamics(dynamics)
    elaw = check_constraints(dynamics, law, params, _n_cols(regressors))
    r = np.asarray(returns, dtype=float)
    n = r.shape[0]
    if n < 1:
        raise ValueError("returns must be non-empty")
    r0 = float(np.mean(r)) if presample_return is None else float(presample_return)
    s2_init = float(np.var(r)) if initial_variance is None else float(initial_variance)
    if not s2_init > 0.0:
        raise FilterError(0, "initial variance must be positive")
    lagged = np.empty(n)
    lagged[0] = r0
    lagged[1:] = r[:-1]
    eps = r - params.mu - params.phi * lagged
    xd = _regressor_contribution(params, regressors, n)
    eabs = dist.abs_moment(elaw) if dynamics is Dynamics.EGARCH else 0.0
    sigma2 = _variance_path(
        _DYN_CODE[dynamics], eps, xd, params.omega, params.alpha, params.beta, params.gamma, eabs, s2_init
    )
    bad = ~(np.isfinite(sigma2) & (sigma2 > 0.0))
    if bad.any():
        raise FilterError(int(np.argmax(bad)))
    return FilterOutput(sigma2=sigma2, eps=eps, z=eps / np.sqrt(sigma2))


def log_likelihood(
    dynamics: Dynamics,
    law,
    params: ParamVector,
    returns,
    regressors: RegressorSet | None = None,
    *,
    penalize: bool = False,
    presample_return: float | None = None,
    initial_variance: float | None = None,
) -> float:
    """Gaussian/t/GED log-likelihood of ``returns`` under the model.

    With ``penalize=True`` inadmissible parameters and numerical blow-ups
    return ``-inf`` instead of raising, which is what the optimizer wants.
    """
    try:
        out = filter_returns(
            dynamics,
            law,
            params,
            returns,
            regressors,
            presample_return=presample_return,
            initial_variance=initial_variance,
        )
    except (ConstraintError, FilterError):
        if penalize:
            return -math.inf
        raise
    elaw = resolve_law(law, params)
    ll = float(np.sum(dist.log_pdf(elaw, out.z)) - 0.5 * np.sum(np.log(out.sigma2)))
    if not math.isfinite(ll):
        if penalize:
            return -math.inf
        raise FilterError(-1, "non-finite log-likelihood")
    return ll


def unconditional_variance(dynamics: Dynamics, law, params: ParamVector) -> float:
    """Stationary variance of the innovation with covariates switched off."""
    dynamics = Dynamics(dynamics)
    elaw = resolve_law(law, params)
    if dynamics is Dynamics.GARCH:
        return params.omega / (1.0 - params.alpha - params.beta)
    if dynamics is Dynamics.GJR:
        return params.omega / (1.0 - params.alpha - params.beta - params.gamma * dist.prob_negative(elaw))
    # log-variance mean; exp of it is the geometric level, adequate as a start
    return math.exp(params.omega / (1.0 - params.beta))


def simulate(
    dynamics: Dynamics,
    law,
    params: ParamVector,
    n: int,
    seed,
    regressors: RegressorSet | None = None,
    *,
    burn: int = 500,
) -> np.ndarray:
    """Simulate ``n`` returns; the first ``burn`` draws use zero covariates and are discarded."""
    dynamics = Dynamics(dynamics)
    if n < 2:
        raise ValueError("n must be >= 2")
    elaw = check_constraints(dynamics, law, params, _n_cols(regressors))
    xd = np.concatenate([np.zeros(burn), _regressor_contribution(params, regressors, n)])
    z = dist.sample(elaw, seed, n + burn)
    eabs = dist.abs_moment(elaw) if dynamics is Dynamics.EGARCH else 0.0
    r = _simulate_path(
        _DYN_CODE[dynamics],
        z,
        xd,
        params.mu,
        params.phi,
        params.omega,
        params.alpha,
        params.beta,
        params.gamma,
        eabs,
        unconditional_variance(dynamics, elaw, params),
        params.mu / (1.0 - params.phi),
    )
    return r[burn:]
