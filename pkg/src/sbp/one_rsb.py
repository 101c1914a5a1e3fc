"""One-step replica-symmetry-breaking (1RSB) analysis of the symmetric binary
perceptron at zero inter-cluster overlap.

The free-energy potential lives on two order parameters: the intra-cluster
overlap ``q1`` and its conjugate ``qhat1``, with the Parisi parameter ``x``
selecting the cluster size that dominates.  This module evaluates the
potential, solves the coupled fixed-point equations by damped iteration and
by Newton's method, extracts per-cluster entropy ``s`` and complexity
``Sigma`` by differentiating in ``x``, continues fixed-point families across
a grid of ``x`` values, and detects the entropy interval where no fixed
point exists at large margins.  Two closed-form large-``x`` constructions
(maximum-entropy and minimum-entropy clusters) complete the picture at the
asymptotic ends of the Sigma(s) curve.

All inner integrals are evaluated in log space on panel-subdivided
Gauss-Legendre grids so the potential survives Parisi parameters up to
``x = 1e4``, where the integrands develop boundary layers narrower than
``1e-9`` in the natural variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ensemble import ModelParams, rescale
from .numerics import gauss_legendre_rule, log_erf, log_half_erf_sum
from .planted_rs import RsOrderParams, rs_low_alpha_update
from .smallalpha import local_max_radius

__all__ = [
    "OneRsbPoint",
    "BranchSet",
    "one_rsb_potential",
    "f_update",
    "g_update",
    "iterate_fixed_point",
    "newton_solve",
    "entropy_complexity",
    "branch_scan",
    "max_entropy_regime",
    "min_entropy_regime",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Retain integrand regions within this many e-folds of the maximum; beyond
# it the contribution is below double-precision resolution even after
# summing ~1e4 nodes.
_LOG_CUT = 260.0

# Gauss-Legendre panel orders for the two channels.  The constraint channel
# has erf-shaped shoulders (order 48 per panel of width <= 2 suffices for
# ~1e-13 relative accuracy); the spin channel is smoother but its reweighted
# peak sits far in the tail at large x, so a higher order is cheap insurance.
_OUT_ORDER = 48
_IN_ORDER = 64

# Fixed points with q1 below the floor (and qhat1 likewise) are identified
# with the zero-overlap (paramagnetic) solution; q1 above the ceiling means
# the iteration escaped toward the frozen boundary and no longer tracks a
# genuine fixed point at finite qhat1.
_Q1_FLOOR = 1e-12
_QH_FLOOR = 1e-12
_Q1_CEIL = 1.0 - 1e-14
_QH_CEIL = 1e6

# Acceptance bounds for emitted points.
_RESIDUAL_BOUND = 1e-10


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OneRsbPoint:
    """A converged 1RSB fixed point with its thermodynamic observables."""

    q1: float
    qhat1: float
    x: float
    phi: float
    entropy_s: float
    complexity_sigma: float
    stable_under_iteration: bool
    branch_id: int


@dataclass(frozen=True)
class BranchSet:
    """Fixed-point families collected across a grid of Parisi parameters."""

    points: Tuple[OneRsbPoint, ...]
    gap_detected: bool
    gap_interval: Optional[Tuple[float, float]]

    def branches(self) -> Dict[int, List[OneRsbPoint]]:
        """Points grouped by family, each family sorted by ``x``."""
        out: Dict[int, List[OneRsbPoint]] = {}
        for point in self.points:
            out.setdefault(point.branch_id, []).append(point)
        for family in out.values():
            family.sort(key=lambda p: p.x)
        return out


# ---------------------------------------------------------------------------
# quadrature scaffolding
# ---------------------------------------------------------------------------


def _subdivide(breaks: Sequence[float], max_width: float) -> List[float]:
    """Insert evenly spaced cuts so no panel exceeds ``max_width``."""
    out: List[float] = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        pieces = max(1, int(math.ceil((b - a) / max_width)))
        for i in range(pieces):
            out.append(a + (b - a) * i / pieces)
    out.append(breaks[-1])
    return out


def _panel_nodes(breaks: Sequence[float], order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        rule = gauss_legendre_rule(a, b, order)
        nodes.append(rule.nodes)
        weights.append(rule.weights)
    return np.concatenate(nodes), np.concatenate(weights)


def _validate(q1: float, qhat1: float, x: float) -> None:
    if not (0.0 < q1 < 1.0):
        raise ValueError(f"q1 must lie in (0, 1), got {q1}")
    if not qhat1 > 0.0:
        raise ValueError(f"qhat1 must be positive, got {qhat1}")
    if not x > 0.0:
        raise ValueError(f"Parisi parameter x must be positive, got {x}")
    if not (math.isfinite(q1) and math.isfinite(qhat1) and math.isfinite(x)):
        raise ValueError("order parameters must be finite")


class _OutChannel:
    """Half-line quadrature for integrals of Dz e^{x phi_out(sqrt(q1) z, 1-q1)}.

    ``phi_out`` is the log band mass of a Gaussian of variance ``1 - q1``
    centred at ``sqrt(q1) z``.  Its derivatives in the mean and the variance
    are carried along on the same nodes so reweighted averages reuse one
    normalization.  Node placement tracks the band edge ``kappa / sqrt(q1)``
    where, for small ``1 - q1``, the integrand drops over a layer of width
    ``sqrt(2 (1 - q1) / q1)``.
    """

    def __init__(self, q1: float, x: float, kappa: float):
        v = 1.0 - q1
        sq = math.sqrt(q1)
        root2v = math.sqrt(2.0 * v)
        layer = root2v / sq
        edge = kappa / sq

        def x_log_mass(z: float) -> float:
            om = sq * z
            a = np.array([(kappa - om) / root2v])
            b = np.array([(kappa + om) / root2v])
            return x * float(log_half_erf_sum(a, b)[0])

        # Outer truncation: walk out from the band edge until the reweighted
        # integrand is _LOG_CUT e-folds down (or the Gaussian factor kills it).
        t_hi = 0.0
        if x_log_mass(edge) > -_LOG_CUT:
            lo, hi = 0.0, 4.0
            while x_log_mass(edge + hi * layer) > -_LOG_CUT and edge + hi * layer < 30.0:
                hi *= 2.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if x_log_mass(edge + mid * layer) > -_LOG_CUT:
                    lo = mid
                else:
                    hi = mid
            t_hi = hi
        zmax = min(edge + t_hi * layer, 26.0)
        brk = sorted(
            {0.0, zmax}
            | {
                min(zmax, max(0.0, edge + c * layer))
                for c in (-60, -40, -25, -15, -8, -4, -2, -1, -0.5, 0, 0.5, 1, 2, 4)
            }
        )
        z, gl_w = _panel_nodes(_subdivide(brk, 2.0), _OUT_ORDER)

        om = sq * z
        self.z = z
        self.A = (kappa - om) / root2v
        self.B = (kappa + om) / root2v
        self.log_mass = log_half_erf_sum(self.A, self.B)
        self.v = v
        self.q1 = q1
        self.log_weight = -0.5 * z * z - _LOG_SQRT_2PI + x * self.log_mass + np.log(gl_w)

    def log_integral(self) -> float:
        hm = float(self.log_weight.max())
        return hm + math.log(float(np.exp(self.log_weight - hm).sum())) + math.log(2.0)

    def average(self, values: np.ndarray) -> float:
        hm = float(self.log_weight.max())
        w = np.exp(self.log_weight - hm)
        return float((w * values).sum() / w.sum())

    def d_omega(self) -> np.ndarray:
        """d phi_out / d omega on the nodes (overflow-safe)."""
        ea = np.exp(-self.A * self.A - self.log_mass)
        eb = np.exp(-self.B * self.B - self.log_mass)
        return (eb - ea) / math.sqrt(2.0 * math.pi * self.v)

    def d_v(self) -> np.ndarray:
        """d phi_out / d V on the nodes."""
        ea = np.exp(-self.A * self.A - self.log_mass)
        eb = np.exp(-self.B * self.B - self.log_mass)
        return -(self.A * ea + self.B * eb) / (2.0 * math.sqrt(math.pi) * self.v)


class _InChannel:
    """Half-line quadrature for integrals of Dz e^{x phi_in(sqrt(qhat1) z)}.

    ``phi_in = log 2 cosh``.  For large ``x sqrt(qhat1)`` the reweighted
    Gaussian peaks at ``z = x sqrt(qhat1)``, far into the tail, so panels
    follow that peak explicitly.
    """

    def __init__(self, qhat1: float, x: float):
        sq = math.sqrt(qhat1)
        zpeak = x * sq
        brk = sorted(
            {
                0.0,
                min(1.0 / max(sq, 1e-12), 0.5 * zpeak),
                max(0.0, zpeak - 12.0),
                max(0.0, zpeak - 4.0),
                zpeak + 4.0,
                zpeak + 12.0,
                zpeak + 24.0,
            }
        )
        z, gl_w = _panel_nodes(_subdivide(brk, 4.0), _IN_ORDER)
        b = sq * z
        self.z = z
        self.b = b
        phi_in = np.abs(b) + np.log1p(np.exp(-2.0 * np.abs(b)))  # log(2 cosh b)
        self.log_weight = -0.5 * z * z - _LOG_SQRT_2PI + x * phi_in + np.log(gl_w)

    def log_integral(self) -> float:
        hm = float(self.log_weight.max())
        return hm + math.log(float(np.exp(self.log_weight - hm).sum())) + math.log(2.0)

    def average(self, values: np.ndarray) -> float:
        hm = float(self.log_weight.max())
        w = np.exp(self.log_weight - hm)
        return float((w * values).sum() / w.sum())

    def tanh_sq_average(self) -> float:
        t = np.tanh(self.b)
        return self.average(t * t)

    def sech_sq_average(self) -> float:
        e = np.exp(-np.abs(self.b))
        e2 = e * e
        return self.average(4.0 * e2 / ((1.0 + e2) ** 2))


# ---------------------------------------------------------------------------
# potential and update maps
# ---------------------------------------------------------------------------


def one_rsb_potential(q1: float, qhat1: float, x: float, params: ModelParams) -> float:
    """Zero inter-cluster-overlap 1RSB potential.

    ``-x qhat1 / 2 + x (1 - x) q1 qhat1 / 2
    + alpha log int Dz e^{x phi_out(sqrt(q1) z, 1 - q1)}
    + log int Dz e^{x phi_in(sqrt(qhat1) z)}``

    Both inner integrals are evaluated in log space with a max shift, so the
    value stays finite for ``x`` up to ``1e4``.
    """
    _validate(q1, qhat1, x)
    out = _OutChannel(q1, x, params.kappa)
    inn = _InChannel(qhat1, x)
    return (
        -x * qhat1 / 2.0
        + x * (1.0 - x) * q1 * qhat1 / 2.0
        + params.alpha * out.log_integral()
        + inn.log_integral()
    )


def f_update(q1: float, x: float, params: ModelParams) -> float:
    """Conjugate-overlap update: the stationarity condition for ``q1``.

    ``qhat1 = -(2 alpha / (1 - x)) < d phi_out / d q1 >_w`` with the average
    reweighted by ``e^{x phi_out}``; the derivative is total, acting through
    the mean ``sqrt(q1) z`` and the variance ``1 - q1``.
    """
    if x == 1.0:
        raise ValueError("f_update has a 1/(1 - x) prefactor; x = 1 is singular")
    _validate(q1, max(_QH_FLOOR, 1.0), x)
    out = _OutChannel(q1, x, params.kappa)
    dq1 = out.d_omega() * out.z / (2.0 * math.sqrt(q1)) - out.d_v()
    return -2.0 * params.alpha / (1.0 - x) * out.average(dq1)


def g_update(qhat1: float, x: float) -> float:
    """Overlap update: the stationarity condition for ``qhat1``.

    ``q1 = (2 / (1 - x)) [ 1/2 - < d phi_in / d qhat1 >_w ]`` with the
    average reweighted by ``e^{x phi_in}``.
    """
    if x == 1.0:
        raise ValueError("g_update has a 1/(1 - x) prefactor; x = 1 is singular")
    if not qhat1 > 0.0:
        raise ValueError(f"qhat1 must be positive, got {qhat1}")
    inn = _InChannel(qhat1, x)
    dqh = inn.z * np.tanh(inn.b) / (2.0 * math.sqrt(qhat1))
    return 2.0 / (1.0 - x) * (0.5 - inn.average(dqh))


def _f_reduced(q1: float, x: float, params: ModelParams) -> float:
    """Equivalent form of ``f_update`` after integrating the node by parts:
    ``alpha < (d phi_out / d omega)^2 >_w``.  The ``1/(1 - x)`` prefactor
    cancels identically, so this form is regular at ``x = 1`` and free of
    large-``x`` cancellations; it is the production route for solving.
    """
    out = _OutChannel(q1, x, params.kappa)
    d = out.d_omega()
    return params.alpha * out.average(d * d)


def _g_reduced(qhat1: float, x: float) -> float:
    """Equivalent form of ``g_update``: ``< tanh^2(sqrt(qhat1) z) >_w``."""
    return _InChannel(qhat1, x).tanh_sq_average()


def _one_minus_g(qhat1: float, x: float) -> float:
    """``1 - g`` computed directly as ``< sech^2 >_w`` (no cancellation)."""
    return _InChannel(qhat1, x).sech_sq_average()


# ---------------------------------------------------------------------------
# entropy / complexity extraction
# ---------------------------------------------------------------------------


def _entropy_complexity_raw(
    q1: float, qhat1: float, x: float, params: ModelParams
) -> Tuple[float, float, float]:
    """(phi, s, Sigma) with s from a Richardson-refined central difference
    of the potential in ``x`` at fixed order parameters."""
    phi = one_rsb_potential(q1, qhat1, x, params)
    h = max(1e-4, 1e-4 * x)

    def slope(step: float) -> float:
        up = one_rsb_potential(q1, qhat1, x + step, params)
        dn = one_rsb_potential(q1, qhat1, x - step, params)
        return (up - dn) / (2.0 * step)

    s = (4.0 * slope(h / 2.0) - slope(h)) / 3.0
    return phi, s, phi - x * s


def entropy_complexity(point: OneRsbPoint, params: ModelParams) -> Tuple[float, float]:
    """Per-cluster entropy ``s = d phi / d x`` (order parameters held fixed;
    stationarity removes the implicit terms) and complexity
    ``Sigma = phi - x s``."""
    _, s, sigma = _entropy_complexity_raw(point.q1, point.qhat1, point.x, params)
    return s, sigma


# ---------------------------------------------------------------------------
# fixed-point solvers
# ---------------------------------------------------------------------------


def _residual_vector(
    log_u: float, log_qh: float, x: float, params: ModelParams
) -> Optional[np.ndarray]:
    """Residuals of the two stationarity conditions in (log(1-q1), log qhat1).

    The overlap equation is evaluated as ``u - <sech^2>_w`` so nothing is
    lost when ``q1`` is within 1e-9 of one.
    """
    if log_u < -34.0 or log_u > -1e-12 or abs(log_qh) > 40.0:
        return None
    u = math.exp(log_u)
    qh = math.exp(log_qh)
    r1 = qh - _f_reduced(1.0 - u, x, params)
    r2 = u - _one_minus_g(qh, x)
    return np.array([r1, r2])


def _newton_core(
    u0: float,
    qh0: float,
    x: float,
    params: ModelParams,
    max_iter: int = 80,
    tol: float = 1e-13,
    stop_near: Sequence[Tuple[float, float]] = (),
) -> Optional[Tuple[float, float, float]]:
    """Damped-step Newton on the residual vector; returns (q1, qhat1, resid).

    ``stop_near`` lists already-solved fixed points (as (q1, qhat1)); the
    iteration short-circuits to one of them as soon as the iterate enters
    its quadratic basin, which saves most of the work on duplicate seeds.
    """
    lu, lqh = math.log(u0), math.log(qh0)
    r = _residual_vector(lu, lqh, x, params)
    if r is None:
        return None

    def norm(vec: np.ndarray) -> float:
        return max(abs(float(vec[0])), abs(float(vec[1])))

    known = [
        (math.log(1.0 - kq1), math.log(kqh), kq1, kqh) for kq1, kqh in stop_near
    ]
    best = (norm(r), lu, lqh)
    stall = 0
    for _ in range(max_iter):
        if norm(r) <= tol:
            return 1.0 - math.exp(lu), math.exp(lqh), norm(r)
        for klu, klqh, kq1, kqh in known:
            if abs(lu - klu) < 0.02 and abs(lqh - klqh) < 0.02:
                return kq1, kqh, 0.0
        jac = np.zeros((2, 2))
        step_h = 1e-5
        ok = True
        for j, (du, dqh) in enumerate(((step_h, 0.0), (0.0, step_h))):
            r_plus = _residual_vector(lu + du, lqh + dqh, x, params)
            r_minus = _residual_vector(lu - du, lqh - dqh, x, params)
            if r_plus is None or r_minus is None:
                ok = False
                break
            jac[:, j] = (r_plus - r_minus) / (2.0 * step_h)
        if not ok:
            break
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        scale = min(1.0, 2.0 / max(abs(float(step[0])), abs(float(step[1])), 1e-30))
        accepted = False
        for _ in range(8):
            lu_try = lu + scale * float(step[0])
            lqh_try = lqh + scale * float(step[1])
            r_try = _residual_vector(lu_try, lqh_try, x, params)
            if r_try is not None and norm(r_try) < norm(r):
                lu, lqh, r = lu_try, lqh_try, r_try
                accepted = True
                if norm(r) < 0.5 * best[0]:
                    stall = 0
                else:
                    stall += 1
                if norm(r) < best[0]:
                    best = (norm(r), lu, lqh)
                break
            scale *= 0.5
        if not accepted:
            break
        if stall >= 12:
            break  # residual has stopped contracting: give up on this seed
    if best[0] <= _RESIDUAL_BOUND:
        return 1.0 - math.exp(best[1]), math.exp(best[2]), best[0]
    return None


def _stability_radius(q1: float, qhat1: float, x: float, params: ModelParams) -> float:
    """Spectral radius of the 2x2 Jacobian of the undamped alternation map
    at the fixed point: sqrt(|f'(q1) g'(qhat1)|)."""
    dq = max(1e-5 * min(q1, 1.0 - q1), 1e-9)
    q_lo = q1 - dq if q1 - dq > 0.0 else q1
    q_hi = q1 + dq if q1 + dq < 1.0 else q1
    df_dq1 = (_f_reduced(q_hi, x, params) - _f_reduced(q_lo, x, params)) / (q_hi - q_lo)
    dqh = max(1e-5 * qhat1, 1e-9)
    h_lo = qhat1 - dqh if qhat1 - dqh > 0.0 else qhat1
    h_hi = qhat1 + dqh
    dg_dqh = (_g_reduced(h_hi, x) - _g_reduced(h_lo, x)) / (h_hi - h_lo)
    return math.sqrt(abs(df_dq1 * dg_dqh))


def _make_point(
    q1: float, qhat1: float, x: float, params: ModelParams, branch_id: int = 0
) -> OneRsbPoint:
    """Assemble a validated OneRsbPoint (residual bound enforced)."""
    q1 = min(max(q1, _Q1_FLOOR), _Q1_CEIL)
    qhat1 = max(qhat1, _QH_FLOOR)
    if 1.0 - q1 < 5e-13 and qhat1 > 1.0:
        # The clamped corner q1 -> 1 with large conjugate passes the residual
        # test only because both maps underflow there; it is not a solution.
        raise RuntimeError(
            f"boundary artifact rejected (q1={q1!r}, qhat1={qhat1!r}, x={x!r})"
        )
    r1 = abs(qhat1 - _f_reduced(q1, x, params))
    r2 = abs((1.0 - q1) - _one_minus_g(qhat1, x))
    if max(r1, r2) > _RESIDUAL_BOUND:
        raise RuntimeError(
            f"stationarity residuals ({r1:.2e}, {r2:.2e}) exceed "
            f"{_RESIDUAL_BOUND:g} at q1={q1!r}, qhat1={qhat1!r}, x={x!r}"
        )
    phi, s, sigma = _entropy_complexity_raw(q1, qhat1, x, params)
    radius = _stability_radius(q1, qhat1, x, params)
    return OneRsbPoint(
        q1=q1,
        qhat1=qhat1,
        x=x,
        phi=phi,
        entropy_s=s,
        complexity_sigma=sigma,
        stable_under_iteration=bool(radius < 1.0),
        branch_id=branch_id,
    )


def newton_solve(
    init: Tuple[float, float], x: float, params: ModelParams
) -> OneRsbPoint:
    """Two-dimensional Newton on the stationarity residuals.

    Converges to fixed points regardless of their stability under the
    alternation map, which plain iteration cannot reach when the local
    spectral radius exceeds one.
    """
    q1, qhat1 = init
    _validate(q1, qhat1, x)
    got = _newton_core(1.0 - q1, qhat1, x, params)
    if got is None:
        raise RuntimeError(
            f"Newton failed to locate a fixed point from init={init!r} at x={x!r}"
        )
    q1_fp, qh_fp, _ = got
    return _make_point(q1_fp, qh_fp, x, params)


def iterate_fixed_point(
    init: Tuple[float, float],
    x: float,
    params: ModelParams,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 5000,
) -> OneRsbPoint:
    """Damped alternation of the two update maps.

    Each sweep proposes ``qhat1 <- f(q1)`` then ``q1 <- g(qhat1)`` and blends
    the proposal with weight ``damping``.  Escape toward the frozen boundary
    (``q1 -> 1`` with ``qhat1`` diverging) is reported as non-convergence
    rather than allowed to masquerade as a fixed point at the clamp.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    q1, qhat1 = init
    _validate(q1, qhat1, x)
    boundary_hits = 0
    residual = math.inf
    for _ in range(max_iter):
        qh_new = _f_reduced(q1, x, params)
        q1_new = 1.0 - _one_minus_g(max(qh_new, _QH_FLOOR), x)
        residual = max(abs(q1_new - q1), abs(qh_new - qhat1))
        q1 = (1.0 - damping) * q1 + damping * q1_new
        qhat1 = (1.0 - damping) * qhat1 + damping * qh_new
        q1 = min(max(q1, _Q1_FLOOR), _Q1_CEIL)
        qhat1 = min(max(qhat1, _QH_FLOOR), _QH_CEIL)
        if q1 >= 1.0 - 1e-12 or qhat1 >= _QH_CEIL:
            boundary_hits += 1
            if boundary_hits >= 30:
                raise RuntimeError(
                    "iteration escaped toward the frozen boundary "
                    f"(q1={q1!r}, qhat1={qhat1!r} at x={x!r})"
                )
        else:
            boundary_hits = 0
        if residual <= tol:
            if q1 >= 1.0 - 1e-12 or qhat1 >= _QH_CEIL:
                raise RuntimeError(
                    "iteration escaped toward the frozen boundary "
                    f"(q1={q1!r}, qhat1={qhat1!r} at x={x!r})"
                )
            polished = _newton_core(1.0 - q1, qhat1, x, params)
            if polished is not None:
                q1, qhat1, _ = polished
            return _make_point(q1, qhat1, x, params)
    raise RuntimeError(
        f"no convergence after {max_iter} damped sweeps "
        f"(last residual {residual:.2e} at q1={q1!r}, qhat1={qhat1!r}, x={x!r})"
    )


# ---------------------------------------------------------------------------
# branch continuation
# ---------------------------------------------------------------------------


def _default_multistart(x: float) -> List[Tuple[float, float]]:
    """Seed battery spanning the known fixed-point families.

    Empirically every nontrivial family keeps ``(x - 1) qhat1`` of order
    one-to-ten across the whole ``x`` range, so seeding on that combination
    with a spread of ``1 - q1`` values covers frozen, clustered, and wide
    solutions with a handful of starts.
    """
    seeds: List[Tuple[float, float]] = []
    denom = max(x - 1.0, 0.5)
    for mu in (0.8, 1.5, 2.6, 4.0, 6.0, 9.0, 12.0):
        qh = mu / denom
        for u in (0.3, 0.1, 0.02, 4.0 * math.exp(-2.0 * mu)):
            seeds.append((1.0 - u, qh))
    return seeds


def _collect_fixed_points(
    x: float,
    params: ModelParams,
    seeds: Sequence[Tuple[float, float]],
) -> List[Tuple[float, float]]:
    """Distinct nontrivial fixed points at one ``x`` (as (q1, qhat1))."""
    found: List[Tuple[float, float]] = []
    for q1_seed, qh_seed in seeds:
        u_seed = min(max(1.0 - q1_seed, 1e-14), 1.0 - 1e-12)
        qh_seed = max(qh_seed, 1e-12)
        got = _newton_core(u_seed, qh_seed, x, params, stop_near=found)
        if got is None:
            continue
        q1_fp, qh_fp, _ = got
        if 1.0 - q1_fp < 5e-13 or q1_fp < 1e-9 or qh_fp < 1e-9:
            continue  # boundary artifacts and the zero-overlap solution
        if any(
            (
                abs(math.log((1.0 - q1_fp) / (1.0 - q))) < 1e-4
                and abs(math.log(qh_fp / qh)) < 1e-4
            )
            or math.hypot(q1_fp - q, qh_fp - qh) < 1e-6
            for q, qh in found
        ):
            continue
        found.append((q1_fp, qh_fp))
    found.sort(key=lambda t: 1.0 - t[0])
    return found


def _trivial_point(x: float, params: ModelParams) -> OneRsbPoint:
    """The zero-overlap solution, emitted at the numerical floor where it is
    an exact fixed point of both update maps."""
    return _make_point(_Q1_FLOOR, _QH_FLOOR, x, params, branch_id=0)


def _in_quadrant(p: OneRsbPoint) -> bool:
    return p.entropy_s > 0.0 and p.complexity_sigma > 0.0


class _Refiner:
    """Bisection helpers that continue a fixed point to nearby ``x``."""

    def __init__(self, params: ModelParams):
        self.params = params

    def continue_to(self, x_new: float, near: OneRsbPoint) -> Optional[OneRsbPoint]:
        got = _newton_core(1.0 - near.q1, near.qhat1, x_new, self.params)
        if got is None:
            return None
        q1_fp, qh_fp, _ = got
        # reject jumps onto a different family
        if abs(math.log((1.0 - q1_fp) / (1.0 - near.q1))) > 1.5:
            return None
        try:
            return _make_point(q1_fp, qh_fp, x_new, self.params, near.branch_id)
        except RuntimeError:
            return None

    def crossing(self, inside: OneRsbPoint, outside: OneRsbPoint) -> OneRsbPoint:
        """Locate where the family leaves the positive quadrant."""
        lo, hi = inside, outside
        for _ in range(14):
            if abs(hi.x - lo.x) <= 2e-3 * min(lo.x, hi.x):
                break
            mid = self.continue_to(math.sqrt(lo.x * hi.x), lo)
            if mid is None:
                break
            if _in_quadrant(mid):
                lo = mid
            else:
                hi = mid
        return lo

    def fold(self, last: OneRsbPoint, x_gone: float) -> OneRsbPoint:
        """Push the family as close as possible to its termination."""
        x_ok, x_bad = last.x, x_gone
        best = last
        for _ in range(14):
            if abs(x_bad - x_ok) <= 2e-3 * min(x_ok, x_bad):
                break
            x_mid = math.sqrt(x_ok * x_bad)
            mid = self.continue_to(x_mid, best)
            if mid is None:
                x_bad = x_mid
            else:
                best, x_ok = mid, x_mid
        return best


def _family_coverage(
    family: List[OneRsbPoint],
    grid: Sequence[float],
    refiner: _Refiner,
) -> Tuple[List[Tuple[float, float]], List[OneRsbPoint]]:
    """Positive-quadrant entropy intervals attained by one family, plus its
    refined interior termination points (fold endpoints).

    A family can leave the quadrant through a sign change of s or Sigma
    between grid values (the crossing is refined so the interval reaches the
    boundary) or terminate where the fixed point annihilates with a partner
    from another family (the termination is refined so bridging across the
    fold can close the union; a family that simply ends at the edge of the
    grid is not a fold).
    """
    if not family:
        return [], []
    segments: List[Tuple[float, float]] = []
    folds: List[OneRsbPoint] = []

    # Refine interior terminations and splice the fold endpoints into the
    # family sequence: the curve is continuous up to the fold, so its
    # entropy belongs to the attained range.
    first, last = family[0], family[-1]
    grid_lo, grid_hi = grid[0], grid[-1]
    idx_first, idx_last = grid.index(first.x), grid.index(last.x)
    extended = list(family)
    if first.x > grid_lo:
        fold_pt = refiner.fold(first, grid[idx_first - 1])
        folds.append(fold_pt)
        if fold_pt.x < first.x:
            extended.insert(0, fold_pt)
    if last.x < grid_hi:
        fold_pt = refiner.fold(last, grid[idx_last + 1])
        folds.append(fold_pt)
        if fold_pt.x > last.x:
            extended.append(fold_pt)

    run: List[float] = []
    for idx, point in enumerate(extended):
        if _in_quadrant(point):
            if not run and idx > 0:
                prev = extended[idx - 1]
                if not _in_quadrant(prev):
                    run.append(refiner.crossing(point, prev).entropy_s)
            run.append(point.entropy_s)
            if idx + 1 < len(extended) and not _in_quadrant(extended[idx + 1]):
                run.append(refiner.crossing(point, extended[idx + 1]).entropy_s)
        if run and (idx + 1 == len(extended) or not _in_quadrant(extended[idx + 1])):
            segments.append((min(run), max(run)))
            run = []
    return segments, folds


def branch_scan(
    params: ModelParams,
    x_grid: Sequence[float],
    multistart: Optional[Sequence[Tuple[float, float]]] = None,
) -> BranchSet:
    """Collect fixed-point families across ``x_grid`` and detect entropy gaps.

    At each grid value the solver runs Newton from a seed battery (the
    built-in default, or ``multistart`` when given) plus the fixed points
    found at the previous grid value (nearest-neighbor continuation).  Distinct solutions (more
    than 1e-6 apart in ``(q1, qhat1)``) are matched to families by proximity
    in the logarithm of ``(1 - q1, qhat1)``.  The zero-overlap solution is
    family 0.  A gap is reported when the union of positive-entropy,
    positive-complexity intervals attained by the nontrivial families leaves
    an interior hole wider than 2% of the attained range; fold terminations
    and quadrant exits are located by bisection in ``x`` before measuring.
    """
    xs = sorted(float(x) for x in x_grid)
    if not xs:
        raise ValueError("x_grid must be non-empty")
    if xs[0] < 0.1 or xs[-1] > 1e4:
        raise ValueError("x_grid must lie within [0.1, 1e4]")

    points: List[OneRsbPoint] = []
    tracks: Dict[int, Tuple[float, float]] = {}
    next_branch = 1
    prev_fps: List[Tuple[float, float]] = []
    for x in xs:
        seeds: List[Tuple[float, float]] = list(prev_fps)
        if multistart is not None:
            seeds.extend((float(a), float(b)) for a, b in multistart)
        else:
            seeds.extend(_default_multistart(x))
        fps = _collect_fixed_points(x, params, seeds)
        prev_fps = fps

        assigned: Dict[int, Tuple[float, float]] = {}
        for q1_fp, qh_fp in fps:
            key = (math.log(1.0 - q1_fp), math.log(qh_fp))
            best_id, best_dist = None, math.inf
            for bid, (lu_prev, lqh_prev) in tracks.items():
                if bid in assigned:
                    continue
                dist = math.hypot(key[0] - lu_prev, key[1] - lqh_prev)
                if dist < best_dist:
                    best_id, best_dist = bid, dist
            if best_id is None or best_dist > 2.5:
                best_id = next_branch
                next_branch += 1
            assigned[best_id] = key
            try:
                points.append(_make_point(q1_fp, qh_fp, x, params, best_id))
            except RuntimeError:
                continue
        tracks.update(assigned)
        points.append(_trivial_point(x, params))

    families: Dict[int, List[OneRsbPoint]] = {}
    for point in points:
        if point.branch_id > 0:
            families.setdefault(point.branch_id, []).append(point)
    refiner = _Refiner(params)
    segments: List[Tuple[float, float]] = []
    fold_ends: List[OneRsbPoint] = []
    for family in families.values():
        family.sort(key=lambda p: p.x)
        fam_segments, fam_folds = _family_coverage(family, xs, refiner)
        segments.extend(fam_segments)
        fold_ends.extend(fam_folds)

    # Two families annihilating at the same fold form one continuous curve,
    # so every entropy between their refined endpoints is attained: bridge
    # fold endpoints that meet at the same x inside the positive quadrant.
    for i, left in enumerate(fold_ends):
        for right in fold_ends[i + 1 :]:
            if left.branch_id == right.branch_id:
                continue
            if abs(math.log(left.x / right.x)) > 0.05:
                continue
            if _in_quadrant(left) and _in_quadrant(right):
                lo = min(left.entropy_s, right.entropy_s)
                hi = max(left.entropy_s, right.entropy_s)
                segments.append((lo, hi))

    gap_detected = False
    gap_interval: Optional[Tuple[float, float]] = None
    if segments:
        segments.sort()
        merged = [list(segments[0])]
        for lo, hi in segments[1:]:
            if lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        hull = merged[-1][1] - merged[0][0]
        best_hole = (0.0, None)
        for left_iv, right_iv in zip(merged[:-1], merged[1:]):
            hole = right_iv[0] - left_iv[1]
            if hole > best_hole[0]:
                best_hole = (hole, (left_iv[1], right_iv[0]))
        if hull > 0.0 and best_hole[0] > 0.02 * hull:
            gap_detected = True
            gap_interval = best_hole[1]

    return BranchSet(points=tuple(points), gap_detected=gap_detected, gap_interval=gap_interval)


# ---------------------------------------------------------------------------
# large-x asymptotic regimes
# ---------------------------------------------------------------------------


def max_entropy_regime(
    params: ModelParams, x: float
) -> Tuple[float, float, float, float]:
    """Widest clusters at large ``x``: the saddle of the local-entropy
    potential sets the cluster radius, and the Gaussian-tail equation sets
    the conjugate order parameter.

    Returns ``(q1, qhat1, s, Sigma)`` with ``Sigma = 0`` at leading order and
    ``s`` from the closed-form entropy display.  Under the correspondence
    ``q1 = m**2``, ``(x - 1) qhat1 = mhat`` the pair solves the reduced
    planted-channel fixed-point equations.
    """
    if x < 10.0:
        raise ValueError("the asymptotic construction requires x >= 10")
    alpha, kappa = params.alpha, params.kappa
    scaled = rescale(ModelParams(alpha=alpha, kappa=kappa, kappa0=0.0), 0.0)
    peak = local_max_radius(scaled.tilde_kappa, 0.0)
    if peak is None:
        raise ValueError(
            "no clustered solution: the local-entropy potential has no "
            f"interior maximum at kappa={kappa!r} (alpha={alpha!r})"
        )
    r_star, _ = peak
    big_l = -math.log(alpha)
    u = alpha * r_star / big_l
    q1 = 1.0 - u
    m = math.sqrt(q1)
    order = RsOrderParams(q=q1, qhat=0.0, m=m, mhat=0.0)
    mhat = rs_low_alpha_update(order, ModelParams(alpha=alpha, kappa=kappa, kappa0=0.0)).mhat
    qhat1 = mhat / (x - 1.0)
    s = 0.5 * u * x * qhat1 + alpha * float(log_erf(kappa / math.sqrt(2.0 * u)))
    return q1, qhat1, s, 0.0


def _regime2_solve(params: ModelParams, x: float) -> Tuple[float, float]:
    """Solve the minimum-entropy asymptotic system for ``(u, qhat1)``.

    Eliminating ``qhat1`` through the saturated overlap closure
    ``u = 4 exp(-2 (x - 1) qhat1)`` leaves one scalar equation,
    ``x^2 / (4 (x - 1)) * log(4 / u) * sqrt(u) = alpha c sqrt(log x / pi)``
    with ``c = exp(-kappa^2 / 2) / erf(kappa / sqrt(2))``; the left side
    increases on ``u < 4 e^{-2}``, so the physical (small-``u``) root is
    found by bisection in ``log u``.
    """
    alpha, kappa = params.alpha, params.kappa
    c = math.exp(-0.5 * kappa * kappa) / math.exp(float(log_erf(kappa / math.sqrt(2.0))))
    rhs = alpha * c * math.sqrt(math.log(x) / math.pi)
    pref = x * x / (4.0 * (x - 1.0))

    def lhs(log_u: float) -> float:
        u = math.exp(log_u)
        return pref * math.log(4.0 / u) * math.sqrt(u)

    log_u_hi = math.log(4.0) - 2.0  # maximum of the left side
    if lhs(log_u_hi) < rhs:
        raise ValueError(
            "no minimum-entropy solution: the overlap closure cannot match "
            f"the constraint tail at x={x!r} for kappa={kappa!r}"
        )
    log_u_lo = -700.0
    for _ in range(200):
        mid = 0.5 * (log_u_lo + log_u_hi)
        if lhs(mid) < rhs:
            log_u_lo = mid
        else:
            log_u_hi = mid
    u = math.exp(0.5 * (log_u_lo + log_u_hi))
    qhat1 = math.log(4.0 / u) / (2.0 * (x - 1.0))
    return u, qhat1


def _regime2_potential(params: ModelParams, x: float) -> float:
    """Minimum-entropy asymptotic potential evaluated at the regime solution.

    The constraint channel contributes ``alpha log erf((kappa - sqrt(2 (1 -
    q1) log x)) / sqrt(2 q1))``: the reweighted band integral collapses to a
    sharp window whose edge retreats by the jump width ``sqrt(2 (1 - q1) log
    x)``.
    """
    alpha, kappa = params.alpha, params.kappa
    u, qh = _regime2_solve(params, x)
    q1 = 1.0 - u
    arg = (kappa - math.sqrt(2.0 * u * math.log(x))) / math.sqrt(2.0 * q1)
    if arg <= 0.0:
        raise ValueError(
            "minimum-entropy window closed: the jump width exceeds the margin "
            f"at x={x!r} for kappa={kappa!r}"
        )
    return (
        -x * qh / 2.0
        + x * (1.0 - x) * q1 * qh / 2.0
        + alpha * float(log_erf(arg))
        + math.log(2.0)
        + x * x * qh / 2.0
        + x * math.exp(-2.0 * (x - 1.0) * qh)
    )


def min_entropy_regime(
    params: ModelParams, x: float
) -> Tuple[float, float, float, float]:
    """Narrowest clusters at large ``x``: overlap so close to one that the
    constraint channel is dominated by the retreating integration window.

    Returns ``(q1, qhat1, s, Sigma)``.  The entropy is the total derivative
    of the asymptotic potential along the regime solution (central
    difference); as ``x`` grows, ``s`` decreases to zero and ``Sigma``
    approaches ``log 2 + alpha log erf(kappa / sqrt(2))``.
    """
    if x < 10.0:
        raise ValueError("the asymptotic construction requires x >= 10")
    u, qhat1 = _regime2_solve(params, x)
    phi = _regime2_potential(params, x)
    h = max(1e-4, 1e-4 * x)

    def slope(step: float) -> float:
        up = _regime2_potential(params, x + step)
        dn = _regime2_potential(params, x - step)
        return (up - dn) / (2.0 * step)

    s = (4.0 * slope(h / 2.0) - slope(h)) / 3.0
    return 1.0 - u, qhat1, s, phi - x * s
