"""Tail-stable special functions and quadrature rules.

Every potential in this package is an expectation over the Gaussian measure
Dz = e^{-z^2/2} dz / sqrt(2 pi) of logarithms of interval probabilities

    P(|mu + sigma Z| <= kappa) = (1/2) erf((kappa - mu)/(sigma sqrt(2)))
                               + (1/2) erf((kappa + mu)/(sigma sqrt(2))),

so the numerical core is an error function whose deep tails, logarithms and
near-cancelling combinations stay accurate, plus Gauss-Hermite (probabilist)
and Gauss-Legendre rules for the outer expectations.

erf/erfc are computed from the classical CALERF rational approximations so
that outputs do not depend on the platform libm.  All functions accept scalars
or numpy arrays and are pure; rules are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_ONE_OVER_SQRT_PI = 1.0 / _SQRT_PI
_LOG_SQRT_PI = 0.5 * math.log(math.pi)
_LOG_2_OVER_SQRT_PI = math.log(2.0) - _LOG_SQRT_PI

# CALERF rational-approximation coefficients (W. J. Cody), double precision.
_ERF_A = (
    3.16112374387056560e00,
    1.13864154151050156e02,
    3.77485237685302021e02,
    3.20937758913846947e03,
    1.85777706184603153e-1,
)
_ERF_B = (
    2.36012909523441209e01,
    2.44024637934444173e02,
    1.28261652607737228e03,
    2.84423683343917062e03,
)
_ERF_C = (
    5.64188496988670089e-1,
    8.88314979438837594e00,
    6.61191906371416295e01,
    2.98635138197400131e02,
    8.81952221241769090e02,
    1.71204761263407058e03,
    2.05107837782607147e03,
    1.23033935479799725e03,
    2.15311535474403846e-8,
)
_ERF_D = (
    1.57449261107098347e01,
    1.17693950891312499e02,
    5.37181101862009858e02,
    1.62138957456669019e03,
    3.29079923573345963e03,
    4.36261909014324716e03,
    3.43936767414372164e03,
    1.23033935480374942e03,
)
_ERF_P = (
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
)
_ERF_Q = (
    2.56852019228982242e00,
    1.87295284992346047e00,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
)

_ERF_SMALL_THRESH = 0.46875
# erf(x) = 1 to within 1e-17 beyond here; erfc-based branches switch over.
TAIL_SWITCH = 6.0


def _as_float_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a


def _scalar_like(out: np.ndarray, *inputs) -> np.ndarray | float:
    if all(np.ndim(v) == 0 for v in inputs):
        return float(out)
    return out


def _erfcx_positive(y: np.ndarray) -> np.ndarray:
    """erfc(y) * exp(y^2) for y > _ERF_SMALL_THRESH (rational approximations)."""
    yr = np.ravel(y)
    out = np.empty_like(yr)
    mid = yr <= 4.0
    idx_mid = np.flatnonzero(mid)
    if idx_mid.size:
        ym = yr[idx_mid]
        num = _ERF_C[8] * ym
        den = ym
        for i in range(7):
            num = (num + _ERF_C[i]) * ym
            den = (den + _ERF_D[i]) * ym
        out[idx_mid] = (num + _ERF_C[7]) / (den + _ERF_D[7])
    idx_far = np.flatnonzero(~mid)
    if idx_far.size:
        yf = yr[idx_far]
        inv = 1.0 / (yf * yf)
        num = _ERF_P[5] * inv
        den = inv
        for i in range(4):
            num = (num + _ERF_P[i]) * inv
            den = (den + _ERF_Q[i]) * inv
        out[idx_far] = (_ONE_OVER_SQRT_PI - inv * (num + _ERF_P[4]) / (den + _ERF_Q[4])) / yf
    return out.reshape(np.shape(y))


def _erfc_positive(y: np.ndarray) -> np.ndarray:
    """erfc(y) for y > _ERF_SMALL_THRESH, split-exponential trick included."""
    y = np.minimum(y, 27.5)  # erfc underflows to 0 well before this
    t = _erfcx_positive(y)
    yq = np.trunc(y * 16.0) / 16.0
    dely = (y - yq) * (y + yq)
    return np.exp(-yq * yq) * np.exp(-dely) * t


def _erf_small(x: np.ndarray) -> np.ndarray:
    z2 = x * x
    num = _ERF_A[4] * z2
    den = z2
    for i in range(3):
        num = (num + _ERF_A[i]) * z2
        den = (den + _ERF_B[i]) * z2
    return x * (num + _ERF_A[3]) / (den + _ERF_B[3])


def erf(x):
    """Error function, odd and monotone, relative error <= 1e-14 on |x| <= 6."""
    xa = _as_float_array(x)
    xf = np.ravel(xa)
    ax = np.abs(xf)
    out = np.empty_like(ax)
    small = ax <= _ERF_SMALL_THRESH
    idx = np.flatnonzero(small)
    if idx.size:
        out[idx] = _erf_small(xf[idx])
    idx = np.flatnonzero(~small)
    if idx.size:
        out[idx] = np.copysign(1.0 - _erfc_positive(ax[idx]), xf[idx])
    return _scalar_like(out.reshape(xa.shape), x)


def erfc(x):
    """Complementary error function 1 - erf(x), accurate in the right tail."""
    xa = _as_float_array(x)
    xf = np.ravel(xa)
    ax = np.abs(xf)
    out = np.empty_like(ax)
    small = ax <= _ERF_SMALL_THRESH
    idx = np.flatnonzero(small)
    if idx.size:
        out[idx] = 1.0 - _erf_small(xf[idx])
    idx = np.flatnonzero(~small)
    if idx.size:
        tail = _erfc_positive(ax[idx])
        out[idx] = np.where(xf[idx] > 0, tail, 2.0 - tail)
    return _scalar_like(out.reshape(xa.shape), x)


def log_erfc(x):
    """log(erfc(x)) for any real x; stays finite far into the right tail."""
    xa = _as_float_array(x)
    xf = np.ravel(xa)
    out = np.empty_like(xf)
    small = np.abs(xf) <= _ERF_SMALL_THRESH
    idx = np.flatnonzero(small)
    if idx.size:
        out[idx] = np.log1p(-_erf_small(xf[idx]))
    idx = np.flatnonzero(~small & (xf > 0))
    if idx.size:
        xp = xf[idx]
        out[idx] = np.log(_erfcx_positive(xp)) - xp * xp
    idx = np.flatnonzero(~small & (xf <= 0))
    if idx.size:
        out[idx] = np.log(2.0 - _erfc_positive(-xf[idx]))
    return _scalar_like(out.reshape(xa.shape), x)


_LOG_ERF_SERIES_THRESH = 0.05


def log_erf(x):
    """log(erf(x)) for x > 0, with uniform relative accuracy.

    Branches: power series log(2x/sqrt(pi)) + log1p(...) for x <= 0.05,
    direct log(erf(x)) while erf is evaluated by its small-|x| rational form,
    and log1p(-erfc(x)) beyond that.  The last branch keeps full relative
    precision even where erf(x) rounds to within one ulp of 1.
    """
    xa = _as_float_array(x)
    if np.any(xa <= 0.0) or not np.all(np.isfinite(xa)):
        raise ValueError("log_erf requires x > 0")
    xf = np.ravel(xa)
    out = np.empty_like(xf)
    tiny = xf <= _LOG_ERF_SERIES_THRESH
    tail = xf >= _ERF_SMALL_THRESH
    idx = np.flatnonzero(tiny)
    if idx.size:
        u = xf[idx] ** 2
        series = u * (-1.0 / 3.0 + u * (1.0 / 10.0 + u * (-1.0 / 42.0 + u / 216.0)))
        out[idx] = _LOG_2_OVER_SQRT_PI + np.log(xf[idx]) + np.log1p(series)
    idx = np.flatnonzero(~tiny & ~tail)
    if idx.size:
        out[idx] = np.log(_erf_small(xf[idx]))
    idx = np.flatnonzero(tail)
    if idx.size:
        out[idx] = np.log1p(-_erfc_positive(xf[idx]))
    return _scalar_like(out.reshape(xa.shape), x)


def log1mexp(d):
    """log(1 - exp(d)) for d < 0, accurate for both tiny and large |d|."""
    da = _as_float_array(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        near = da > -math.log(2.0)
        r_near = np.log(-np.expm1(np.where(near, da, -1.0)))
        r_far = np.log1p(-np.exp(np.where(near, -1.0, da)))
    out = np.where(near, r_near, r_far)
    return _scalar_like(out, d)


def logsumexp(a, axis=None, log_weights=None):
    """Max-shifted log(sum(exp(a))) (optionally log(sum(w * exp(a)))).

    All -inf inputs yield -inf without warnings; log_weights, if given, are
    added to `a` before reduction.
    """
    aa = _as_float_array(a)
    if log_weights is not None:
        aa = aa + _as_float_array(log_weights)
    hi = np.max(aa, axis=axis, keepdims=True)
    hi_safe = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(aa - hi_safe), axis=axis, keepdims=True)) + hi_safe
    out = np.where(np.isfinite(hi), out, hi)
    if axis is not None:
        out = np.squeeze(out, axis=axis)
    else:
        out = out.reshape(())
    return float(out) if out.ndim == 0 else out


# 32-node Gauss-Legendre on [-1, 1] used for the near-cancelling erf sums.
_GL32_NODES, _GL32_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _erf_erfc_nonneg(x: np.ndarray):
    """(erf(x), erfc(x)) for x >= 0 from a single rational-form evaluation."""
    erf_out = np.empty_like(x)
    erfc_out = np.empty_like(x)
    small = x <= _ERF_SMALL_THRESH
    idx = np.flatnonzero(small)
    if idx.size:
        e = _erf_small(x[idx])
        erf_out[idx] = e
        erfc_out[idx] = 1.0 - e
    idx = np.flatnonzero(~small)
    if idx.size:
        c = _erfc_positive(x[idx])
        erf_out[idx] = 1.0 - c
        erfc_out[idx] = c
    return erf_out, erfc_out


def log_half_erf_sum(a, b):
    """log((1/2) erf(a) + (1/2) erf(b)) without catastrophic cancellation.

    Requires a + b > 0 (the argument of the log is then positive).  When the
    smaller argument is negative the sum is an erfc difference
    (1/2)(erfc(c) - erfc(hi)) with c = -min(a,b); if the difference is
    near-cancelling it is evaluated as the exact integral
    (1/sqrt(pi)) \\int_c^hi e^{-t^2} dt with e^{-c^2} factored in log space.
    """
    aa, bb = np.broadcast_arrays(_as_float_array(a), _as_float_array(b))
    aa = aa.astype(float, copy=False)
    bb = bb.astype(float, copy=False)
    if np.any(aa + bb <= 0.0) or not (np.all(np.isfinite(aa)) and np.all(np.isfinite(bb))):
        raise ValueError("log_half_erf_sum requires a + b > 0 and finite arguments")
    lo = np.ravel(np.minimum(aa, bb))
    hi = np.ravel(np.maximum(aa, bb))
    out = np.empty_like(lo)

    # Branch 1: both arguments >= 0 -- plain sum, erfc form near 1.
    idx = np.flatnonzero(lo >= 0.0)
    if idx.size:
        erf_l, erfc_l = _erf_erfc_nonneg(lo[idx])
        erf_h, erfc_h = _erf_erfc_nonneg(hi[idx])
        p = 0.5 * (erf_l + erf_h)
        r = np.log(p)
        near = np.flatnonzero(p > 0.5)
        if near.size:
            r[near] = np.log1p(-0.5 * (erfc_l[near] + erfc_h[near]))
        out[idx] = r

    # Branch 2: lo < 0.  c = -lo in [0, hi).
    idx = np.flatnonzero(lo < 0.0)
    if idx.size:
        c = -lo[idx]
        h2 = hi[idx]
        lc = log_erfc(c)
        delta = log_erfc(h2) - lc
        r = np.empty_like(c)
        wide = np.flatnonzero(delta <= -0.5)
        if wide.size:
            r[wide] = math.log(0.5) + lc[wide] + log1mexp(delta[wide])
        narrow = np.flatnonzero(delta > -0.5)
        if narrow.size:
            # Near-cancelling: exact Gauss-Legendre of e^{-(t^2 - c^2)} on [c, hi].
            cn = c[narrow]
            half_w = 0.5 * (h2[narrow] - cn)
            t = cn[:, None] + half_w[:, None] * (_GL32_NODES + 1.0)
            kernel = np.exp(-(t - cn[:, None]) * (t + cn[:, None]))
            s = half_w * np.sum(_GL32_WEIGHTS * kernel, axis=-1)
            r[narrow] = -cn * cn + np.log(s) - _LOG_SQRT_PI
        out[idx] = r

    return _scalar_like(out.reshape(aa.shape), a, b)


KIND_HERMITE = "gauss_hermite_probabilist"
KIND_LEGENDRE = "gauss_legendre"

DEFAULT_HERMITE_ORDER = 201
DEFAULT_LEGENDRE_ORDER = 129


@dataclass(frozen=True)
class QuadratureRule:
    """Immutable nodes/weights pair.

    For the probabilist Gauss-Hermite kind the weights integrate the measure
    Dz = e^{-z^2/2} dz / sqrt(2 pi) and sum to 1; for Gauss-Legendre on [a, b]
    they sum to the interval length.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or weights.ndim != 1 or nodes.size != weights.size:
            raise ValueError("nodes and weights must be 1-D and of equal length")
        if nodes.size == 0:
            raise ValueError("empty quadrature rule")
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
            raise ValueError("nodes and weights must be finite")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        if self.kind not in (KIND_HERMITE, KIND_LEGENDRE):
            raise ValueError(f"unknown quadrature kind: {self.kind!r}")
        if self.kind == KIND_HERMITE and abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError("probabilist Gauss-Hermite weights must sum to 1")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return int(self.nodes.size)


_HERMITE_CACHE: dict[int, QuadratureRule] = {}
_LEGENDRE_CACHE: dict[tuple[int, float, float], QuadratureRule] = {}
_LEGENDRE_UNIT_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_hermite_rule(order: int = DEFAULT_HERMITE_ORDER) -> QuadratureRule:
    """Probabilist Gauss-Hermite rule: sum(w_i f(z_i)) approximates E_Dz[f].

    Far-tail nodes whose weights underflow to exactly zero (|z| around 38 and
    beyond at high order) are dropped; they cannot contribute to any sum.
    """
    order = int(order)
    rule = _HERMITE_CACHE.get(order)
    if rule is None:
        nodes, weights = special.roots_hermitenorm(order)
        keep = weights > 0.0
        rule = QuadratureRule(nodes[keep], weights[keep] / _SQRT_2PI, KIND_HERMITE)
        _HERMITE_CACHE[order] = rule
    return rule


def _legendre_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    pair = _LEGENDRE_UNIT_CACHE.get(order)
    if pair is None:
        pair = np.polynomial.legendre.leggauss(order)
        _LEGENDRE_UNIT_CACHE[order] = pair
    return pair


def gauss_legendre_rule(a: float, b: float, order: int = DEFAULT_LEGENDRE_ORDER) -> QuadratureRule:
    """Gauss-Legendre rule on [a, b]; weights sum to b - a."""
    a = float(a)
    b = float(b)
    order = int(order)
    if not (b > a):
        raise ValueError("gauss_legendre_rule requires b > a")
    key = (order, a, b)
    rule = _LEGENDRE_CACHE.get(key)
    if rule is None:
        x, w = _legendre_unit(order)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        rule = QuadratureRule(mid + half * x, half * w, KIND_LEGENDRE)
        if len(_LEGENDRE_CACHE) < 4096:
            _LEGENDRE_CACHE[key] = rule
    return rule


_ADAPTIVE_ORDERS = (DEFAULT_HERMITE_ORDER, 2 * DEFAULT_HERMITE_ORDER - 1, 4 * DEFAULT_HERMITE_ORDER - 3)
_ADAPTIVE_TOL = 1e-10


def gaussian_expectation(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule | None = None) -> float:
    """E_Dz[f(z)] = sum w_i f(z_i) over a probabilist Gauss-Hermite rule.

    With an explicit rule this is a single pass; with rule=None the order is
    escalated (201 -> 401 -> 801) until doubling changes the result by less
    than 1e-10.  f must be vectorized and finite at the nodes.
    """

    def one_pass(r: QuadratureRule) -> float:
        vals = np.asarray(f(r.nodes), dtype=float)
        if vals.shape != r.nodes.shape:
            raise ValueError("integrand must return one value per node")
        if not np.all(np.isfinite(vals)):
            raise ValueError("integrand returned non-finite values at quadrature nodes")
        return float(np.dot(r.weights, vals))

    if rule is not None:
        if rule.kind != KIND_HERMITE:
            raise ValueError("gaussian_expectation requires a probabilist Gauss-Hermite rule")
        return one_pass(rule)

    prev = one_pass(gauss_hermite_rule(_ADAPTIVE_ORDERS[0]))
    for order in _ADAPTIVE_ORDERS[1:]:
        cur = one_pass(gauss_hermite_rule(order))
        if abs(cur - prev) < _ADAPTIVE_TOL:
            return cur
        prev = cur
    return prev


def truncated_gaussian_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    k0: float,
    rule: QuadratureRule | None = None,
) -> float:
    """E[f(Z) | |Z| <= k0] for Z standard normal, k0 > 0.

    Gauss-Legendre on [-k0, k0] with the Gaussian weight folded into the
    integrand and the normalization N_{k0} = erf(k0/sqrt(2)) divided out.
    """
    k0 = float(k0)
    if not (k0 > 0.0) or not math.isfinite(k0):
        raise ValueError("truncated_gaussian_expectation requires k0 > 0")
    if rule is None:
        rule = gauss_legendre_rule(-k0, k0, DEFAULT_LEGENDRE_ORDER)
    else:
        if rule.kind != KIND_LEGENDRE:
            raise ValueError("truncated_gaussian_expectation requires a Gauss-Legendre rule")
        if rule.nodes[0] < -k0 or rule.nodes[-1] > k0:
            raise ValueError("rule nodes must lie inside [-k0, k0]")
    z = rule.nodes
    vals = np.asarray(f(z), dtype=float)
    if vals.shape != z.shape:
        raise ValueError("integrand must return one value per node")
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values at quadrature nodes")
    dens = np.exp(-0.5 * z * z) / _SQRT_2PI
    norm = erf(k0 / math.sqrt(2.0))
    return float(np.dot(rule.weights, dens * vals) / norm)
