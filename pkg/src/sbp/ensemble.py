"""Model parameterization, the satisfiability margin, and small-density rescaling.

A symmetric binary perceptron instance is parameterized by the constraint
density alpha = M/N, the margin kappa of the constraints |<g_a, x>| <= kappa
sqrt(N), and a stricter reference margin kappa0 <= kappa used when planting a
reference solution.  At small alpha the natural variables are the rescaled
margins and squared distance

    tilde_kappa  = kappa  * sqrt(-log(alpha) / alpha),
    tilde_kappa0 = kappa0 * sqrt(-log(alpha) / alpha),
    tilde_r      = (1 - m^2) * (-log(alpha) / alpha),

under which entropy and constraint terms balance at the same order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import optimize

from .numerics import erf, log_erf

_SQRT2 = math.sqrt(2.0)
_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class ModelParams:
    """Constraint density and margins of one model instance."""

    alpha: float
    kappa: float
    kappa0: float = 0.0

    def __post_init__(self) -> None:
        for name in ("alpha", "kappa", "kappa0"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite real, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.kappa0 < 0.0:
            raise ValueError("kappa0 must be non-negative")
        if self.kappa0 > self.kappa:
            raise ValueError("kappa0 must not exceed kappa")


@dataclass(frozen=True)
class RescaledParams:
    """Margins and squared distance in small-alpha rescaled units."""

    tilde_kappa: float
    tilde_kappa0: float
    tilde_r: float

    def __post_init__(self) -> None:
        for name in ("tilde_kappa", "tilde_kappa0", "tilde_r"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite real, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.tilde_kappa <= 0.0:
            raise ValueError("tilde_kappa must be positive")
        if self.tilde_kappa0 < 0.0:
            raise ValueError("tilde_kappa0 must be non-negative")
        if self.tilde_kappa0 > self.tilde_kappa:
            raise ValueError("tilde_kappa0 must not exceed tilde_kappa")
        if self.tilde_r <= 0.0:
            raise ValueError("tilde_r must be positive")


def _total_entropy(kappa: float, alpha: float) -> float:
    """log 2 + alpha * log P(|Z| <= kappa): annealed entropy density."""
    return math.log(2.0) + alpha * log_erf(kappa / _SQRT2)


def kappa_sat(alpha: float) -> float:
    """The margin at which the annealed entropy density vanishes.

    Solves erf(kappa/sqrt(2)) = 2^(-1/alpha).  The right-hand side underflows
    for small alpha, so the equation is solved in log space:
    alpha * log erf(kappa/sqrt(2)) = -log 2, bracketed on [1e-300, 10] and
    polished by Newton steps to |erf(kappa/sqrt(2)) - 2^(-1/alpha)| <= 1e-14.
    """
    alpha = float(alpha)
    if not (alpha > 0.0 and math.isfinite(alpha)):
        raise ValueError("alpha must be positive and finite")
    # Solve for log(kappa): the residual is nearly linear there when kappa is
    # exponentially small, so the bracketed solve converges in a few steps.
    lo, hi = math.log(1e-300), math.log(10.0)
    log_kappa = optimize.brentq(
        lambda t: _total_entropy(math.exp(t), alpha), lo, hi, rtol=8.9e-16
    )
    kappa = math.exp(log_kappa)
    # Newton polish on the log-space residual; derivative of log_erf(k/sqrt(2))
    # is (2/sqrt(pi)) exp(-k^2/2) / (sqrt(2) erf(k/sqrt(2))).
    for _ in range(3):
        resid = _total_entropy(kappa, alpha)
        if resid == 0.0:
            break
        slope = (
            alpha
            * _TWO_OVER_SQRT_PI
            * math.exp(-0.5 * kappa * kappa)
            / (_SQRT2 * erf(kappa / _SQRT2))
        )
        step = resid / slope
        if abs(step) >= kappa:
            break
        kappa -= step
    return kappa


def _log_scale(alpha: float) -> float:
    """sqrt(-log(alpha)/alpha) scale factor; requires alpha in (0, 1)."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("rescaling is defined only for alpha in (0, 1)")
    return math.sqrt(-math.log(alpha) / alpha)


def rescale(params: ModelParams, m: float) -> RescaledParams:
    """Map (kappa, kappa0, overlap m) to rescaled units at density alpha."""
    m = float(m)
    if not abs(m) < 1.0:
        raise ValueError("overlap m must satisfy |m| < 1")
    scale = _log_scale(params.alpha)
    return RescaledParams(
        tilde_kappa=params.kappa * scale,
        tilde_kappa0=params.kappa0 * scale,
        tilde_r=(1.0 - m * m) * scale * scale,
    )


def unrescale(rescaled: RescaledParams, alpha: float) -> tuple[ModelParams, float]:
    """Exact inverse of rescale; returns the params and the overlap m >= 0."""
    alpha = float(alpha)
    scale = _log_scale(alpha)
    one_minus_m2 = rescaled.tilde_r / (scale * scale)
    if one_minus_m2 >= 1.0:
        raise ValueError("tilde_r too large: would give |m| >= 1 at this alpha")
    m = math.sqrt(1.0 - one_minus_m2)
    params = ModelParams(
        alpha=alpha,
        kappa=rescaled.tilde_kappa / scale,
        kappa0=rescaled.tilde_kappa0 / scale,
    )
    return params, m
