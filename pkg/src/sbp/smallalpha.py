"""Rescaled local-entropy potential at vanishing constraint density.

In rescaled units (margins tilde_kappa, tilde_kappa0 and squared distance
tilde_r, all O(1) as alpha -> 0) the local entropy per constraint becomes

    phi(tilde_r) = tilde_r / 4
                 + E_{Z0} log P(|Z| <= tilde_kappa | Z0),   Z ~ N(Z0, tilde_r),

with Z0 the reference margin truncated to [-tilde_kappa0, tilde_kappa0].
phi rises from 0 at tilde_r -> 0+, may develop an interior local maximum
(the cluster of solutions around the reference) separated by a local minimum
from the tilde_r/4 bulk growth.  Two thresholds in tilde_kappa organize the
landscape: the energetic one, where the potential stops dipping below zero,
and the entropic one, where the interior maximum ceases to exist.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .numerics import erf, gauss_legendre_rule, log_erf, log_half_erf_sum

_logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

_Z0_ORDER = 129
_R_SCAN_LO = 1e-6
_R_SCAN_HI = 1e3
_R_SCAN_POINTS = 400
_KAPPA_BRACKET = (0.1, 5.0)
_BISECT_ITERS = 90


@dataclass(frozen=True)
class ThresholdResult:
    """A critical rescaled margin with its tangency radius and residuals."""

    tilde_kappa_crit: float
    tilde_r_crit: float
    kind: str
    residuals: tuple[float, float]

    def __post_init__(self) -> None:
        if self.kind not in ("energetic", "entropic"):
            raise ValueError(f"unknown threshold kind: {self.kind!r}")
        if not all(abs(r) <= 1e-10 for r in self.residuals):
            raise ValueError(f"threshold residuals too large: {self.residuals}")


@dataclass(frozen=True)
class ClusterPoint:
    """One point of the complexity-versus-entropy curve (units of alpha)."""

    tilde_kappa0: float
    tilde_kappa: float
    tilde_r_star: float
    entropy_s: float
    complexity_minus_sigma_o: float

    def __post_init__(self) -> None:
        if not self.tilde_r_star > 0.0:
            raise ValueError("tilde_r_star must be positive")
        if not math.isfinite(self.entropy_s):
            raise ValueError("entropy_s must be finite")


def _check_radius(tilde_r: float) -> float:
    tilde_r = float(tilde_r)
    if not (tilde_r > 0.0 and math.isfinite(tilde_r)):
        raise ValueError("tilde_r must be positive and finite")
    return tilde_r


def _z0_nodes(tilde_kappa0: float) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and normalized truncated-Gaussian weights for Z0."""
    rule = gauss_legendre_rule(-tilde_kappa0, tilde_kappa0, order=_Z0_ORDER)
    z0 = rule.nodes
    density = np.exp(-0.5 * z0 * z0) / _SQRT_2PI
    weights = rule.weights * density / erf(tilde_kappa0 / _SQRT2)
    return z0, weights


def rescaled_potential(tilde_r: float, tilde_kappa: float, tilde_kappa0: float = 0.0) -> float:
    """Local entropy per constraint in rescaled units; tilde_r/4 plus log-probability."""
    tilde_r = _check_radius(tilde_r)
    denom = math.sqrt(2.0 * tilde_r)
    if tilde_kappa0 == 0.0:
        return 0.25 * tilde_r + log_erf(tilde_kappa / denom)
    z0, weights = _z0_nodes(tilde_kappa0)
    vals = log_half_erf_sum((tilde_kappa - z0) / denom, (tilde_kappa + z0) / denom)
    return 0.25 * tilde_r + float(np.sum(weights * vals))


def _decay_rate(tilde_r, tilde_kappa: float, tilde_kappa0: float):
    """D(r) = -d/dr of the log-probability term; stationarity is D = 1/4.

    Closed form for tilde_kappa0 = 0; otherwise the truncated expectation of
    the per-Z0 closed form.  Accepts scalar or array tilde_r.
    """
    r = np.asarray(tilde_r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if tilde_kappa0 == 0.0:
        u = tilde_kappa / np.sqrt(2.0 * r)
        out = tilde_kappa * np.exp(-(u * u)) / (_SQRT_2PI * r**1.5 * erf(u))
    else:
        ratio = _conditional_ratio(r, tilde_kappa, tilde_kappa0, power=1)
        _, weights = _z0_nodes(tilde_kappa0)
        out = np.sum(weights * ratio, axis=1) / (2.0 * _SQRT_2PI * r**1.5)
    return float(out[0]) if scalar else out


def _conditional_ratio(
    r: np.ndarray, tilde_kappa: float, tilde_kappa0: float, power: int
) -> np.ndarray:
    """[(k+z0)^p e^{-u_+^2} + (k-z0)^p e^{-u_-^2}] / P per (r, z0), odd p.

    Signed log-space evaluation: the numerator terms can individually
    underflow (or carry opposite signs when |z0| > tilde_kappa), while the
    ratio to the interval probability P stays moderate.
    """
    z0, _ = _z0_nodes(tilde_kappa0)
    rr = r[:, None]
    cp = tilde_kappa + z0
    cm = tilde_kappa - z0
    up = cp / np.sqrt(2.0 * rr)
    um = cm / np.sqrt(2.0 * rr)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        log_prob = log_half_erf_sum(up, um)
        tp = np.where(cp != 0.0, power * np.log(np.abs(cp)), -np.inf) - up * up
        tm = np.where(cm != 0.0, power * np.log(np.abs(cm)), -np.inf) - um * um
        peak_exp = np.maximum(tp, tm)
        peak_safe = np.where(np.isfinite(peak_exp), peak_exp, 0.0)
        combo = np.sign(cp) * np.exp(tp - peak_safe) + np.sign(cm) * np.exp(
            tm - peak_safe
        )
        log_mag = peak_safe + np.log(np.abs(combo)) - log_prob
        out = np.sign(combo) * np.exp(log_mag)
    return np.where(np.isfinite(peak_exp), out, 0.0)


def potential_derivative(tilde_r: float, tilde_kappa: float, tilde_kappa0: float = 0.0) -> float:
    """d(rescaled_potential)/d(tilde_r) = 1/4 - D(tilde_r)."""
    tilde_r = _check_radius(tilde_r)
    return 0.25 - _decay_rate(tilde_r, tilde_kappa, tilde_kappa0)


def _log_decay_slope(r: float, tilde_kappa: float, tilde_kappa0: float) -> float:
    """d log D / d tilde_r, analytic in both margin regimes.

    With e = ratio(power 1) and f = ratio(power 3)/(2 r^2) per Z0 node,
    dD/dr decomposes as -3D/(2r) plus the weighted sum of
    f + e^2/(2 sqrt(2 pi) r^{3/2}), whence the logarithmic slope.
    """
    if tilde_kappa0 == 0.0:
        return (
            tilde_kappa * tilde_kappa / (2.0 * r * r)
            - 1.5 / r
            + _decay_rate(r, tilde_kappa, 0.0)
        )
    _, weights = _z0_nodes(tilde_kappa0)
    r_arr = np.array([r])
    e = _conditional_ratio(r_arr, tilde_kappa, tilde_kappa0, power=1)[0]
    f = _conditional_ratio(r_arr, tilde_kappa, tilde_kappa0, power=3)[0] / (
        2.0 * r * r
    )
    s = float(np.sum(weights * e))
    ds = float(np.sum(weights * (f + e * e / (2.0 * _SQRT_2PI * r**1.5))))
    return -1.5 / r + ds / s


def _scan_radii(tilde_kappa: float = 0.0, tilde_kappa0: float = 0.0) -> np.ndarray:
    # The cluster radius scales like the squared margin gap, so extend the
    # scan floor below 1e-6 when the two margins nearly coincide.
    lo = _R_SCAN_LO
    gap = tilde_kappa - tilde_kappa0
    if tilde_kappa0 > 0.0 and gap > 0.0:
        lo = min(lo, (0.05 * gap) ** 2)
    points = max(_R_SCAN_POINTS, int(45 * math.log10(_R_SCAN_HI / lo)))
    return np.logspace(math.log10(lo), math.log10(_R_SCAN_HI), points)


def _bracket_in_kappa(value, level: float) -> tuple[float, float]:
    """Find consecutive kappa grid points where `value` crosses `level` upward.

    Scans a log grid over the declared search domain [0.1, 5]; the solved
    quantities (interior-minimum potential; 1/4 minus the peak of D) are
    increasing in tilde_kappa, so the first upward crossing brackets the root.
    """
    grid = np.logspace(math.log10(_KAPPA_BRACKET[0]), math.log10(_KAPPA_BRACKET[1]), 60)
    prev_k, prev_v = grid[0], value(float(grid[0]))
    for k in grid[1:]:
        v = value(float(k))
        if prev_v < level <= v:
            return float(prev_k), float(k)
        prev_k, prev_v = k, v
    raise RuntimeError(
        f"threshold bracket not found in tilde_kappa range {_KAPPA_BRACKET}"
    )


def _stationary_radii(tilde_kappa: float, tilde_kappa0: float) -> Optional[tuple[float, float]]:
    """Both roots of D = 1/4 (local max first, local min second), if any."""
    radii = _scan_radii(tilde_kappa, tilde_kappa0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        sign = _decay_rate(radii, tilde_kappa, tilde_kappa0) - 0.25
    sign = np.where(np.isfinite(sign), sign, -0.25)

    def refine(i: int) -> float:
        return float(
            optimize.brentq(
                lambda r: _decay_rate(r, tilde_kappa, tilde_kappa0) - 0.25,
                radii[i],
                radii[i + 1],
                xtol=1e-14,
                rtol=8.9e-16,
            )
        )

    up = np.flatnonzero((sign[:-1] < 0.0) & (sign[1:] >= 0.0))
    down = np.flatnonzero((sign[:-1] >= 0.0) & (sign[1:] < 0.0))
    if up.size == 0 or down.size == 0:
        return None
    return refine(int(up[0])), refine(int(down[-1]))


def local_max_radius(
    tilde_kappa: float, tilde_kappa0: float = 0.0
) -> Optional[tuple[float, float]]:
    """Radius of the interior local maximum and the curvature there, if it exists.

    The potential rises from 0 at tilde_r -> 0+, so the first stationary point
    (first upward crossing of D through 1/4) is the maximum; the stationarity
    equation loses its roots above the entropic threshold, in which case None
    is returned.
    """
    roots = _stationary_radii(float(tilde_kappa), float(tilde_kappa0))
    if roots is None:
        return None
    r_star = roots[0]
    d_slope = _log_decay_slope(r_star, tilde_kappa, tilde_kappa0)
    curvature = -_decay_rate(r_star, tilde_kappa, tilde_kappa0) * d_slope
    if curvature >= 0.0:
        return None
    return r_star, curvature


def energetic_threshold(tilde_kappa0: float = 0.0) -> ThresholdResult:
    """Margin at which the potential's interior minimum touches zero.

    Nested solve: for each tilde_kappa the stationarity equation D = 1/4 gives
    the interior minimum radius (larger root); bisection in tilde_kappa drives
    the potential there to zero.  Above the entropic threshold the potential
    is positive everywhere, which acts as the positive side of the bracket.
    """
    tilde_kappa0 = float(tilde_kappa0)

    def min_value(kappa: float) -> tuple[float, Optional[float]]:
        roots = _stationary_radii(kappa, tilde_kappa0)
        if roots is None:
            return 1.0, None  # no dip: potential positive everywhere
        r_min = roots[1]
        return rescaled_potential(r_min, kappa, tilde_kappa0), r_min

    lo, hi = _bracket_in_kappa(lambda k: min_value(k)[0], 0.0)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        v_mid, _ = min_value(mid)
        if v_mid < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * hi:
            break
    kappa_crit = 0.5 * (lo + hi)
    value, r_crit = min_value(kappa_crit)
    if r_crit is None:
        # Tangency disappeared within rounding of the bracket; use the last
        # bracketing side that still has the dip.
        value, r_crit = min_value(lo)
        kappa_crit = lo
    residuals = (
        rescaled_potential(r_crit, kappa_crit, tilde_kappa0),
        potential_derivative(r_crit, kappa_crit, tilde_kappa0),
    )
    return ThresholdResult(
        tilde_kappa_crit=kappa_crit,
        tilde_r_crit=r_crit,
        kind="energetic",
        residuals=residuals,
    )


def entropic_threshold(tilde_kappa0: float = 0.0) -> ThresholdResult:
    """Margin at which the interior maximum and minimum merge (double root).

    Inner step finds the peak of D over tilde_r (root of d log D / dr);
    the outer bisection in tilde_kappa drives the peak value of D to 1/4.
    """
    tilde_kappa0 = float(tilde_kappa0)

    def peak(kappa: float) -> tuple[float, float]:
        radii = _scan_radii(kappa, tilde_kappa0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            dvals = _decay_rate(radii, kappa, tilde_kappa0)
        dvals = np.where(np.isfinite(dvals), dvals, 0.0)
        i = int(np.argmax(dvals))
        if dvals[i] <= 0.0 or i == 0 or i == radii.size - 1:
            return float(dvals[i]), float(radii[i])
        r_peak = float(
            optimize.brentq(
                lambda r: _log_decay_slope(r, kappa, tilde_kappa0),
                radii[i - 1],
                radii[i + 1],
                xtol=1e-14,
                rtol=8.9e-16,
            )
        )
        return float(_decay_rate(r_peak, kappa, tilde_kappa0)), r_peak

    lo, hi = _bracket_in_kappa(lambda k: 0.25 - peak(k)[0], 0.0)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        v_mid, _ = peak(mid)
        if 0.25 - v_mid < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * hi:
            break
    kappa_crit = 0.5 * (lo + hi)
    d_peak, r_crit = peak(kappa_crit)
    residuals = (d_peak - 0.25, _log_decay_slope(r_crit, kappa_crit, tilde_kappa0))
    return ThresholdResult(
        tilde_kappa_crit=kappa_crit,
        tilde_r_crit=r_crit,
        kind="entropic",
        residuals=residuals,
    )


def cluster_entropy(tilde_kappa0: float, tilde_kappa: float) -> Optional[float]:
    """Entropy (units of alpha) of the cluster around a reference, if present."""
    found = local_max_radius(tilde_kappa, tilde_kappa0)
    if found is None:
        return None
    return rescaled_potential(found[0], tilde_kappa, tilde_kappa0)


def sigma_o(alpha: float) -> float:
    """Reference-margin-independent part of the complexity, log 2 + alpha log(-alpha/log alpha)."""
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    return math.log(2.0) + alpha * math.log(-alpha / math.log(alpha))


def complexity(tilde_kappa0: float, alpha: float) -> tuple[float, float]:
    """Complexity of reference solutions: (exact form, rescaled form).

    Exact: log 2 + alpha log erf(kappa0/sqrt(2)) with kappa0 unrescaled from
    tilde_kappa0.  Rescaled: sigma_o(alpha) + alpha log(sqrt(2/pi) tilde_kappa0).
    """
    alpha = float(alpha)
    tilde_kappa0 = float(tilde_kappa0)
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if not tilde_kappa0 > 0.0:
        raise ValueError("tilde_kappa0 must be positive")
    kappa0 = tilde_kappa0 * math.sqrt(-alpha / math.log(alpha))
    exact = math.log(2.0) + alpha * log_erf(kappa0 / _SQRT2)
    rescaled = sigma_o(alpha) + alpha * math.log(math.sqrt(2.0 / math.pi) * tilde_kappa0)
    return exact, rescaled


def sigma_s_curve(
    tilde_kappa: float, alpha: float, kappa0_grid: list[float]
) -> list[ClusterPoint]:
    """Complexity-versus-entropy curve over a grid of reference margins.

    One ClusterPoint per grid value whose potential has an interior maximum;
    grid values without one are skipped (logged).  Output is ordered by
    entropy_s; both entropy and complexity offset are in units of alpha.
    """
    if len(kappa0_grid) == 0:
        raise ValueError("kappa0_grid must be non-empty")
    points: list[ClusterPoint] = []
    skipped: list[float] = []
    for tilde_kappa0 in kappa0_grid:
        tilde_kappa0 = float(tilde_kappa0)
        found = local_max_radius(tilde_kappa, tilde_kappa0)
        if found is None:
            skipped.append(tilde_kappa0)
            continue
        r_star = found[0]
        entropy_s = rescaled_potential(r_star, tilde_kappa, tilde_kappa0)
        with np.errstate(divide="ignore"):
            offset = (
                math.log(math.sqrt(2.0 / math.pi) * tilde_kappa0)
                if tilde_kappa0 > 0.0
                else -math.inf
            )
        points.append(
            ClusterPoint(
                tilde_kappa0=tilde_kappa0,
                tilde_kappa=float(tilde_kappa),
                tilde_r_star=r_star,
                entropy_s=entropy_s,
                complexity_minus_sigma_o=offset,
            )
        )
    if skipped:
        _logger.info(
            "sigma_s_curve: no interior maximum at tilde_kappa0 = %s (skipped)", skipped
        )
    points.sort(key=lambda p: p.entropy_s)
    return points
