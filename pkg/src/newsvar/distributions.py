"""Standardized (zero-mean, unit-variance) innovation laws.

Three symmetric families are supported: Gaussian, Student-t rescaled to unit
variance, and the generalized error distribution (GED) in Nelson's
parameterization. All functions accept scalars or arrays for ``z``/``tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize, special

__all__ = [
    "LawKind",
    "ErrorLaw",
    "ShapeError",
    "QuantileError",
    "pdf",
    "log_pdf",
    "cdf",
    "sf",
    "quantile",
    "abs_moment",
    "prob_negative",
    "sample",
]

_LOG_2PI = math.log(2.0 * math.pi)
STUDENT_MIN_SHAPE = 2.0 + 1e-6


class ShapeError(ValueError):
    """Shape parameter outside the admissible domain of the law."""


class QuantileError(RuntimeError):
    """Root finding on the CDF failed to converge."""


class LawKind(str, Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"
    GED = "ged"


@dataclass(frozen=True)
class ErrorLaw:
    """An innovation law together with its shape parameter.

    ``shape`` is the degrees of freedom for Student-t and the tail parameter
    for GED; it must be ``None`` for the Gaussian.
    """

    kind: LawKind
    shape: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LawKind(self.kind))
        _check_shape(self.kind, self.shape)

    @classmethod
    def gaussian(cls) -> "ErrorLaw":
        return cls(LawKind.GAUSSIAN)

    @classmethod
    def student_t(cls, nu: float) -> "ErrorLaw":
        return cls(LawKind.STUDENT_T, float(nu))

    @classmethod
    def ged(cls, nu: float) -> "ErrorLaw":
        return cls(LawKind.GED, float(nu))

    def with_shape(self, shape: float | None) -> "ErrorLaw":
        return ErrorLaw(self.kind, shape)

    @property
    def has_shape(self) -> bool:
        return self.kind is not LawKind.GAUSSIAN


def _check_shape(kind: LawKind, shape: float | None) -> None:
    if kind is LawKind.GAUSSIAN:
        if shape is not None:
            raise ShapeError("Gaussian law takes no shape parameter")
        return
    if shape is None or not math.isfinite(shape):
        raise ShapeError(f"{kind.value} law requires a finite shape, got {shape!r}")
    if kind is LawKind.STUDENT_T and shape <= STUDENT_MIN_SHAPE:
        raise ShapeError(f"Student-t shape must exceed {STUDENT_MIN_SHAPE}, got {shape}")
    if kind is LawKind.GED and shape <= 0.0:
        raise ShapeError(f"GED shape must be positive, got {shape}")


def ged_scale(nu: float) -> float:
    """Scale ``lambda`` making the GED with shape ``nu`` unit-variance."""
    return math.sqrt(2.0 ** (-2.0 / nu) * math.exp(math.lgamma(1.0 / nu) - math.lgamma(3.0 / nu)))


def log_pdf(law: ErrorLaw, z):
    z = np.asarray(z, dtype=float)
    if law.kind is LawKind.GAUSSIAN:
        out = -0.5 * _LOG_2PI - 0.5 * z * z
    elif law.kind is LawKind.STUDENT_T:
        nu = law.shape
        const = (
            special.gammaln(0.5 * (nu + 1.0))
            - special.gammaln(0.5 * nu)
            - 0.5 * math.log(math.pi * (nu - 2.0))
        )
        out = const - 0.5 * (nu + 1.0) * np.log1p(z * z / (nu - 2.0))
    else:
        nu = law.shape
        lam = ged_scale(nu)
        const = math.log(nu) - math.log(lam) - (1.0 + 1.0 / nu) * math.log(2.0) - math.lgamma(1.0 / nu)
        out = const - 0.5 * np.abs(z / lam) ** nu
    return out if out.ndim else float(out)


def pdf(law: ErrorLaw, z):
    out = np.exp(log_pdf(law, z))
    return out if np.ndim(out) else float(out)


def cdf(law: ErrorLaw, z):
    z = np.asarray(z, dtype=float)
    if law.kind is LawKind.GAUSSIAN:
        out = special.ndtr(z)
    elif law.kind is LawKind.STUDENT_T:
        nu = law.shape
        out = special.stdtr(nu, z / math.sqrt((nu - 2.0) / nu))
    else:
        nu = law.shape
        lam = ged_scale(nu)
        tail = 0.5 * special.gammaincc(1.0 / nu, 0.5 * np.abs(z / lam) ** nu)
        out = np.where(z < 0.0, tail, 1.0 - tail)
    return out if out.ndim else float(out)


def sf(law: ErrorLaw, z):
    """Survival function ``P(Z > z)``; exact in the upper tail where ``1 - cdf`` underflows."""
    out = cdf(law, -np.asarray(z, dtype=float))
    return out if np.ndim(out) else float(out)


def _closed_quantile(law: ErrorLaw, tau: np.ndarray) -> np.ndarray:
    if law.kind is LawKind.GAUSSIAN:
        return special.ndtri(tau)
    if law.kind is LawKind.STUDENT_T:
        nu = law.shape
        return special.stdtrit(nu, tau) * math.sqrt((nu - 2.0) / nu)
    nu = law.shape
    lam = ged_scale(nu)
    # complementary inverse keeps full precision in the tails
    g = special.gammainccinv(1.0 / nu, 2.0 * np.minimum(tau, 1.0 - tau))
    return np.sign(tau - 0.5) * lam * (2.0 * g) ** (1.0 / nu)


def _bracketed_quantile(law: ErrorLaw, tau: float) -> float:
    lo, hi = -1.0, 1.0
    while cdf(law, lo) > tau:
        lo *= 2.0
        if lo < -1e8:
            raise QuantileError(f"cannot bracket tau={tau}: cdf({lo})={cdf(law, lo)}")
    while cdf(law, hi) < tau:
        hi *= 2.0
        if hi > 1e8:
            raise QuantileError(f"cannot bracket tau={tau}: cdf({hi})={cdf(law, hi)}")
    root, info = optimize.brentq(
        lambda x: cdf(law, x) - tau, lo, hi, xtol=1e-12, full_output=True, disp=False
    )
    if not info.converged:
        raise QuantileError(f"brentq failed for tau={tau} in [{lo}, {hi}]: {info.flag}")
    return root


def quantile(law: ErrorLaw, tau):
    """Inverse CDF; closed inverses with a bracketed root-finding fallback."""
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0.0) | (tau >= 1.0)):
        raise ValueError("tau must lie strictly inside (0, 1)")
    out = np.asarray(_closed_quantile(law, tau), dtype=float)
    bad = ~np.isfinite(out)
    if np.any(bad):
        flat = out.reshape(-1)
        for i in np.flatnonzero(bad.reshape(-1)):
            flat[i] = _bracketed_quantile(law, float(tau.reshape(-1)[i]))
    return out if out.ndim else float(out)


def abs_moment(law: ErrorLaw) -> float:
    """E|Z| for the standardized law."""
    if law.kind is LawKind.GAUSSIAN:
        return math.sqrt(2.0 / math.pi)
    nu = law.shape
    if law.kind is LawKind.STUDENT_T:
        return (
            2.0
            * math.sqrt(nu - 2.0)
            * math.exp(math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu))
            / (math.sqrt(math.pi) * (nu - 1.0))
        )
    lam = ged_scale(nu)
    return lam * 2.0 ** (1.0 / nu) * math.exp(math.lgamma(2.0 / nu) - math.lgamma(1.0 / nu))


def prob_negative(law: ErrorLaw) -> float:
    """P(Z < 0); enters the GJR stationarity constraint."""
    return float(cdf(law, 0.0))


def sample(law: ErrorLaw, seed, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. standardized innovations from a private generator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if law.kind is LawKind.GAUSSIAN:
        return rng.standard_normal(n)
    nu = law.shape
    if law.kind is LawKind.STUDENT_T:
        return rng.standard_t(nu, n) * math.sqrt((nu - 2.0) / nu)
    lam = ged_scale(nu)
    g = rng.standard_gamma(1.0 / nu, n)
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return signs * lam * (2.0 * g) ** (1.0 / nu)
