"""Replica-symmetric free energy of the planted model at generic parameters.

The planted reference induces a four-parameter order structure
``(q, qhat, m, mhat)``: ``m`` is the overlap with the reference, ``q`` the
typical overlap between two solutions, and the hatted variables their
conjugates.  This module evaluates the free energy, applies the saddle-point
update maps (with analytic inner derivatives, cancellation-safe in log
space), iterates them to a fixed point with adaptive damping, and provides
the reduced two-variable iteration valid when the overlap saturates
(``m -> 1``), which is the bridge to the frozen one-step branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import ModelParams
from .numerics import (
    DEFAULT_HERMITE_ORDER,
    DEFAULT_LEGENDRE_ORDER,
    erf,
    gauss_hermite_rule,
    gauss_legendre_rule,
    log_erf,
    log_half_erf_sum,
)

__all__ = [
    "RsOrderParams",
    "RsSolveReport",
    "default_cluster_init",
    "init_from_radius",
    "rs_free_energy",
    "rs_low_alpha_update",
    "rs_solve",
    "rs_update",
    "saturated_overlap",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG2 = math.log(2.0)

# Below this ratio (q - m^2) / (1 - q) the z-fluctuation of the output field
# is integrated out analytically; the 1/sqrt(q - m^2) factors in the literal
# update equations would otherwise amplify quadrature noise without bound.
_DELTA_RATIO_SWITCH = 1e-10
_UNIT_OPEN = float(np.nextafter(1.0, 0.0))
_DAMPING_FLOOR = 1e-3


@dataclass(frozen=True)
class RsOrderParams:
    """Order parameters (q, qhat, m, mhat) of the planted saddle."""

    q: float
    qhat: float
    m: float
    mhat: float

    def __post_init__(self) -> None:
        for name in ("q", "qhat", "m", "mhat"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite real, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not 0.0 <= self.q < 1.0:
            raise ValueError("q must lie in [0, 1)")
        if self.qhat < 0.0:
            raise ValueError("qhat must be non-negative")
        if not -1.0 < self.m < 1.0:
            raise ValueError("m must lie in (-1, 1)")
        if self.q < self.m * self.m - 1e-9:
            raise ValueError("q must be at least m^2 (up to 1e-9 slack)")


@dataclass(frozen=True)
class RsSolveReport:
    """Outcome of a damped saddle-point iteration.

    ``residual`` is the max-component change of the last raw update;
    ``converged`` implies it is at or below the tolerance the solve was run
    with.  ``entropy`` is the free energy at the final iterate and
    ``complexity`` the log-count of admissible reference vectors.
    """

    fixed_point: RsOrderParams
    iterations: int
    residual: float
    converged: bool
    entropy: float
    complexity: float


def _margin_rule(kappa0: float, order: int = DEFAULT_LEGENDRE_ORDER):
    """Nodes/weights of the normal law truncated to [-kappa0, kappa0].

    Weights are normalised to sum to one; kappa0 = 0 degenerates to a point
    mass at the origin.
    """
    if kappa0 == 0.0:
        return np.zeros(1), np.ones(1)
    rule = gauss_legendre_rule(-kappa0, kappa0, order)
    weights = rule.weights * np.exp(-0.5 * rule.nodes**2)
    return rule.nodes, weights / weights.sum()


def _hermite_nodes(order: int = DEFAULT_HERMITE_ORDER):
    rule = gauss_hermite_rule(order)
    return rule.nodes, rule.weights


def _signed_log_sum(l1, s1, l2, s2):
    """(log|s1 e^{l1} + s2 e^{l2}|, sign) elementwise, overflow-free."""
    hi = np.maximum(l1, l2)
    lo = np.minimum(l1, l2)
    s_hi = np.where(l1 >= l2, s1, s2)
    same = s1 * s2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.exp(lo - hi)
        magnitude = hi + np.where(same >= 0.0, np.log1p(ratio), np.log1p(-ratio))
    magnitude = np.where(np.isneginf(hi), -np.inf, magnitude)
    return magnitude, s_hi


def _output_derivatives(A: np.ndarray, B: np.ndarray, log_phi: np.ndarray, v: float):
    """First field- and variance-derivatives of the output log-mass.

    With ``phi = log(erf(A)/2 + erf(B)/2)``, ``A = (kappa - omega)/sqrt(2V)``
    and ``B = (kappa + omega)/sqrt(2V)``, returns (d phi/d omega,
    d phi/d V).  All exponentials are combined in log space so the result is
    finite even where the band mass underflows.
    """
    la = -A * A
    lb = -B * B
    log_norm = 0.5 * math.log(2.0 * math.pi * v)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # d/d omega: (e^{-B^2} - e^{-A^2}) / (sqrt(2 pi V) Phi)
        diff_mag, diff_sign = _signed_log_sum(lb, np.ones_like(lb), la, -np.ones_like(la))
        d_omega = diff_sign * np.exp(diff_mag - log_norm - log_phi)
        # d/dV: -(A e^{-A^2} + B e^{-B^2}) / (2 sqrt(pi) V Phi)
        log_a = la + np.log(np.abs(A))
        log_b = lb + np.log(np.abs(B))
        sum_mag, sum_sign = _signed_log_sum(log_a, np.sign(A), log_b, np.sign(B))
        d_v = -sum_sign * np.exp(sum_mag - math.log(2.0 * _SQRT_PI * v) - log_phi)
    return d_omega, d_v


def _band_log_mass(omega: np.ndarray, v: float, kappa: float) -> np.ndarray:
    scale = math.sqrt(2.0 * v)
    return log_half_erf_sum((kappa - omega) / scale, (kappa + omega) / scale)


def _channel_out(q: float, m: float, params: ModelParams, w_rule, z_rule):
    """New (mhat, qhat) from the output channel at fixed (q, m)."""
    alpha = params.alpha
    kappa = params.kappa
    v = 1.0 - q
    delta = max(q - m * m, 0.0)
    w_nodes, w_weights = w_rule
    scale = math.sqrt(2.0 * v)
    if delta <= v * _DELTA_RATIO_SWITCH:
        omega = m * w_nodes
        A = (kappa - omega) / scale
        B = (kappa + omega) / scale
        log_phi = log_half_erf_sum(A, B)
        d_omega, d_v = _output_derivatives(A, B, log_phi, v)
        d2_omega = 2.0 * d_v - d_omega**2
        mhat = alpha * (
            float(np.sum(w_weights * d_omega * w_nodes))
            - m * float(np.sum(w_weights * d2_omega))
        )
        qhat = alpha * float(np.sum(w_weights * d_omega**2))
    else:
        z_nodes, z_weights = z_rule
        root_delta = math.sqrt(delta)
        omega = m * w_nodes[:, None] + root_delta * z_nodes[None, :]
        A = (kappa - omega) / scale
        B = (kappa + omega) / scale
        log_phi = log_half_erf_sum(A, B)
        d_omega, d_v = _output_derivatives(A, B, log_phi, v)
        weights = w_weights[:, None] * z_weights[None, :]
        mean_dw_w = float(np.sum(weights * d_omega * w_nodes[:, None]))
        mean_dw_z = float(np.sum(weights * d_omega * z_nodes[None, :]))
        mean_dv = float(np.sum(weights * d_v))
        mhat = alpha * (mean_dw_w - m * mean_dw_z / root_delta)
        qhat = alpha * (2.0 * mean_dv - mean_dw_z / root_delta)
    return mhat, max(qhat, 0.0)


def _channel_in(mhat: float, qhat: float, z_rule):
    """New (m, q, q - m^2) from the binary prior.

    The third value is the tanh variance, reported separately because
    recovering it from q - m^2 loses all precision once the overlap
    saturates.
    """
    z_nodes, z_weights = z_rule
    t = np.tanh(mhat + math.sqrt(qhat) * z_nodes)
    m = float(np.sum(z_weights * t))
    variance = float(np.sum(z_weights * (t - m) ** 2))
    m = min(max(m, -_UNIT_OPEN), _UNIT_OPEN)
    q = min(m * m + variance, _UNIT_OPEN)
    return m, q, variance


def _log_2cosh(y: np.ndarray) -> np.ndarray:
    ay = np.abs(y)
    return ay + np.log1p(np.exp(-2.0 * ay))


def _free_energy_impl(
    q: float,
    qhat: float,
    m: float,
    mhat: float,
    params: ModelParams,
    x_o: int,
    w_rule,
    z_rule,
) -> float:
    v = 1.0 - q
    delta = max(q - m * m, 0.0)
    w_nodes, w_weights = w_rule
    z_nodes, z_weights = z_rule
    if delta == 0.0:
        energy = float(np.sum(w_weights * _band_log_mass(m * w_nodes, v, params.kappa)))
    else:
        omega = m * w_nodes[:, None] + math.sqrt(delta) * z_nodes[None, :]
        log_phi = _band_log_mass(omega, v, params.kappa)
        energy = float(np.sum(w_weights[:, None] * z_weights[None, :] * log_phi))
    field = mhat * x_o + math.sqrt(qhat) * z_nodes
    prior = float(np.sum(z_weights * _log_2cosh(field)))
    return -0.5 * (1.0 - q) * qhat - m * mhat + params.alpha * energy + prior


def rs_free_energy(order: RsOrderParams, params: ModelParams, x_o: int = 1) -> float:
    """Planted free energy (= local entropy density) at given order parameters.

    Requires q strictly between m^2 and 1; the output field is
    ``omega = m w + sqrt(q - m^2) z`` at variance ``V = 1 - q``, with the
    reference margin w averaged over the truncated normal law and the gauge
    variable ``x_o`` = +1 or -1 (the value is invariant under the choice).
    """
    if x_o not in (-1, 1):
        raise ValueError("x_o must be +1 or -1")
    if order.q <= order.m * order.m:
        raise ValueError("rs_free_energy requires q > m^2")
    return _free_energy_impl(
        order.q,
        order.qhat,
        order.m,
        order.mhat,
        params,
        x_o,
        _margin_rule(params.kappa0),
        _hermite_nodes(),
    )


def rs_update(order: RsOrderParams, params: ModelParams) -> RsOrderParams:
    """One synchronous application of the four saddle-point equations.

    The conjugates (mhat, qhat) come first from the analytic derivatives of
    the output log-mass (chain rule through the field omega and variance V),
    then (m, q) from the tanh moments of the prior.  The boundary
    q - m^2 -> 0 is handled by the exact analytic limit of the updates.
    The whole map is odd in (m, mhat): non-trivial fixed points come in
    gauge-mirrored pairs +-(m, mhat).
    """
    w_rule = _margin_rule(params.kappa0)
    z_rule = _hermite_nodes()
    mhat, qhat = _channel_out(order.q, order.m, params, w_rule, z_rule)
    m, q, _ = _channel_in(mhat, qhat, z_rule)
    return RsOrderParams(q=q, qhat=qhat, m=m, mhat=mhat)


def default_cluster_init() -> RsOrderParams:
    """Starting point that targets the non-trivial (cluster) branch."""
    m = 1.0 - 1e-3
    return RsOrderParams(q=m * m + 1e-6, qhat=1e-3, m=m, mhat=5.0)


def init_from_radius(params: ModelParams, r_tilde: float) -> RsOrderParams:
    """Cluster-branch starting point at rescaled squared radius ``r_tilde``.

    Maps ``1 - m^2 = r_tilde * alpha / (-log alpha)`` to order parameters on
    the degenerate manifold q = m^2, qhat = 0, mhat = atanh(m).  Useful for
    seeding the solver near a cluster saddle predicted by the small-alpha
    theory (the default init targets moderate alpha ~ 1e-2).
    """
    if not (math.isfinite(r_tilde) and r_tilde > 0.0):
        raise ValueError("r_tilde must be a positive real")
    if params.alpha >= 1.0:
        raise ValueError("the rescaled radius parametrization requires alpha < 1")
    one_minus_m2 = r_tilde * params.alpha / (-math.log(params.alpha))
    if one_minus_m2 >= 1.0:
        raise ValueError("r_tilde is too large: 1 - m^2 would reach 1")
    m = math.sqrt(1.0 - one_minus_m2)
    return RsOrderParams(q=m * m, qhat=0.0, m=m, mhat=math.atanh(m))


# Residual below which the damped sweeps hand over to a Newton polish of
# the raw map; the polish turns the linear tail of the iteration into a
# couple of quadratic steps.
_NEWTON_TRIGGER = 1e-4
_NEWTON_STEPS = 40
# Consecutive residual decreases needed before the damping factor is grown
# back after having been cut by a transient.
_GROW_AFTER = 6
# Consecutive boundary-pinned sweeps after which the iteration is declared
# a runaway (no finite saddle in that direction) and abandoned early.
_STALL_LIMIT = 30
# A conjugate field this large drives the overlap to the representable
# boundary; physical fixed points stay an order of magnitude below it.
_MHAT_RUNAWAY = 60.0
# An updated overlap this close to 1 has no resolvable saddle left in double
# precision (the conjugate response is quantised in steps much larger than
# any tolerance) -- treat it as saturation, not as progress.
_SATURATION_EDGE = 1e-11
# Below this residual a rejected Newton step means the iterate has hit the
# double-precision floor of the order-parameter representation (on branches
# where the overlap saturates, 1 - m^2 is quantised at ~1e-16/(1-m^2)
# relative, and the conjugates inherit that as an irreducible jitter), so
# further sweeps cannot help and the solve stops where it stands.
_FLOOR_EXIT = 1e-8
# Damped sweeps that fail to shave at least _PLATEAU_GAIN off the best
# residual within a window of this many sweeps are going nowhere (a
# representation floor), so give up rather than burn the remaining budget.
# The window only counts below _PLATEAU_SCALE: larger residuals occur while
# legitimately traversing state space, where slow change is normal.
_PLATEAU_WINDOW = 80
_PLATEAU_GAIN = 0.98
_PLATEAU_SCALE = 1e-5


def _clamp_state(state: np.ndarray) -> np.ndarray:
    """Project a raw (q, qhat, m, mhat) proposal onto the physical domain."""
    q, qhat, m, mhat = state
    m = min(max(m, -_UNIT_OPEN), _UNIT_OPEN)
    q = min(max(q, m * m), _UNIT_OPEN)
    return np.array([q, max(qhat, 0.0), m, mhat])


def rs_solve(
    params: ModelParams,
    init: RsOrderParams | None = None,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    x_o: int = 1,
) -> RsSolveReport:
    """Damped fixed-point iteration of the saddle equations.

    Each sweep applies the prior channel first -- (m, q) from the current
    conjugates -- then refreshes (mhat, qhat) from the output channel, so a
    starting point only needs its conjugate pair placed near the target
    branch (the default init aims at the cluster branch for alpha near
    1e-2; see ``init_from_radius`` for smaller alpha).  The damped move is
    ``new = (1 - gamma) * old + gamma * update`` with ``gamma`` starting at
    ``damping``, halved (floor 1e-3) whenever the raw residual grows and
    grown back after sustained decrease; once the residual is small the
    remaining tail is closed by a Newton polish of the raw map (finite
    difference Jacobian, steps projected onto the physical domain).
    Iteration counts map evaluations and stops at ``max_iter``;
    non-convergence is reported, not raised.  The physical bounds
    0 <= q < 1 and m^2 <= q hold along the whole trajectory, enforced by
    the order-parameter type on every damped iterate.

    The saddle map is odd in (m, mhat); ``x_o = -1`` mirrors the starting
    point through that symmetry, so the solve lands on the gauge-flipped
    fixed point (q, qhat, -m, -mhat) with identical entropy.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    if x_o not in (-1, 1):
        raise ValueError("x_o must be +1 or -1")
    if init is None:
        init = default_cluster_init()
    w_rule = _margin_rule(params.kappa0)
    z_rule = _hermite_nodes()

    def raw(state: np.ndarray) -> tuple[np.ndarray, float]:
        """One sweep in (q, qhat, m, mhat) plus the image's sqrt(q - m^2)."""
        m, q, variance = _channel_in(state[3], state[1], z_rule)
        mhat, qhat = _channel_out(q, m, params, w_rule, z_rule)
        return np.array([q, qhat, m, mhat]), math.sqrt(max(variance, 0.0))

    def newton_candidate(
        current: np.ndarray, image: np.ndarray, image_u: float
    ) -> np.ndarray | None:
        """Newton step proposal in manifold-adapted coordinates.

        Cluster fixed points sit within machine epsilon of the degenerate
        manifold q = m^2, where the map has a sqrt(q - m^2) cusp: finite
        differences straight in q (or in m at fixed q) step across the cusp
        and produce a useless Jacobian.  Differencing in (u, qhat, m, mhat)
        with u = sqrt(q - m^2) -- so the m-probe slides along the manifold
        and the u-probe scales the distance to it -- keeps the secants on
        the smooth branch of the map.
        """
        q, qhat, m, mhat = current
        u = math.sqrt(max(q - m * m, 0.0))
        base = np.array([u, qhat, m, mhat])
        phi0 = np.array([image_u, image[1], image[2], image[3]])
        # A prior-first sweep reads only the conjugate pair off the state,
        # so the u- and m-columns of the Jacobian vanish identically and
        # need no probes; the linear solve then couples the live 2x2
        # conjugate block and back-substitutes consistent (u, m) moves.
        jac = np.zeros((4, 4))
        for j in (1, 3):
            probe = current.copy()
            if j == 1:
                h = 1e-7 * max(qhat, 1e-3)
                probe[1] = qhat + h
            else:
                h = 1e-7 * max(abs(mhat), 1e-3)
                probe[3] = mhat + h
            probe_image, probe_u = raw(probe)
            jac[:, j] = (
                np.array([probe_u, probe_image[1], probe_image[2], probe_image[3]])
                - phi0
            ) / h
        try:
            step = np.linalg.solve(jac - np.eye(4), -(phi0 - base))
        except np.linalg.LinAlgError:
            return None
        new_m = min(max(m + step[2], -_UNIT_OPEN), _UNIT_OPEN)
        new_u = max(u + step[0], 0.0)
        new_q = min(new_m * new_m + new_u * new_u, _UNIT_OPEN)
        return np.array([new_q, max(qhat + step[1], 0.0), new_m, mhat + step[3]])

    current = np.array([init.q, init.qhat, x_o * init.m, x_o * init.mhat])
    gamma = damping
    previous_residual = math.inf
    decreases = 0
    stalled = 0
    newton_gate = _NEWTON_TRIGGER
    best_residual = math.inf
    since_best = 0
    evaluations = 0
    image, image_u = raw(current)
    evaluations += 1
    residual = float(np.max(np.abs(image - current)))

    while evaluations < max_iter and residual > tol:
        if residual <= newton_gate:
            # Newton phase on R(x) = raw(x) - x.
            improved = False
            for _ in range(_NEWTON_STEPS):
                # Polish past `tol` while improvement lasts: the raw map is
                # locally expansive around cluster saddles, so the reported
                # point must sit at the float noise floor for a re-applied
                # update to stay within `tol` of it.
                if evaluations + 5 > max_iter:
                    break
                candidate = newton_candidate(current, image, image_u)
                evaluations += 2
                if candidate is None:
                    break
                candidate_image, candidate_u = raw(candidate)
                evaluations += 1
                candidate_residual = float(np.max(np.abs(candidate_image - candidate)))
                if not math.isfinite(candidate_residual) or candidate_residual >= residual:
                    break
                current, image, image_u = candidate, candidate_image, candidate_u
                residual = candidate_residual
                improved = True
            if residual <= tol:
                break
            if not improved:
                if residual <= _FLOOR_EXIT:
                    # Stalled at the representation floor; no iteration on
                    # the public state can do better, so stop honestly.
                    break
                # The local model failed; make the damped sweeps earn a
                # retry by shrinking the residual before gating back in.
                newton_gate = residual / 10.0
                current = _clamp_state((1.0 - gamma) * current + gamma * image)
                image, image_u = raw(current)
                evaluations += 1
                residual = float(np.max(np.abs(image - current)))
                previous_residual = residual
                continue
        else:
            current = _clamp_state((1.0 - gamma) * current + gamma * image)
            image, image_u = raw(current)
            evaluations += 1
            residual = float(np.max(np.abs(image - current)))
            if (
                1.0 - abs(image[2]) < _SATURATION_EDGE
                or abs(image[3]) >= _MHAT_RUNAWAY
            ):
                # Updated overlap pinned against 1 (or the conjugate field
                # far beyond any physical saddle): the iteration is running
                # away, so bail out as non-converged instead of burning the
                # whole budget.
                stalled += 1
                if stalled >= _STALL_LIMIT:
                    break
            else:
                stalled = 0
            if residual < _PLATEAU_GAIN * best_residual:
                best_residual = residual
                since_best = 0
            elif residual <= _PLATEAU_SCALE:
                since_best += 1
                if since_best >= _PLATEAU_WINDOW:
                    break
            if residual > previous_residual:
                gamma = max(0.5 * gamma, _DAMPING_FLOOR)
                decreases = 0
            else:
                decreases += 1
                if decreases >= _GROW_AFTER:
                    gamma = min(1.5 * gamma, damping)
                    decreases = 0
            previous_residual = residual

    converged = residual <= tol
    fixed_point = RsOrderParams(
        q=current[0], qhat=current[1], m=current[2], mhat=current[3]
    )
    entropy = _free_energy_impl(
        fixed_point.q,
        fixed_point.qhat,
        fixed_point.m,
        fixed_point.mhat,
        params,
        x_o,
        w_rule,
        z_rule,
    )
    complexity = (
        -math.inf
        if params.kappa0 == 0.0
        else _LOG2 + params.alpha * float(log_erf(params.kappa0 / _SQRT2))
    )
    return RsSolveReport(
        fixed_point=fixed_point,
        iterations=evaluations,
        residual=residual,
        converged=converged,
        entropy=entropy,
        complexity=complexity,
    )


def saturated_overlap(mhat: float) -> float:
    """Large-field overlap closure m = 1 - 2 e^{-2 mhat}."""
    return 1.0 - 2.0 * math.exp(-2.0 * mhat)


def rs_low_alpha_update(order: RsOrderParams, params: ModelParams) -> RsOrderParams:
    """Reduced two-variable iteration valid when the overlap saturates.

    Tracks only (m, mhat): the conjugate comes from a single truncated
    Gaussian integral over the reference margin (q pinned to m^2, qhat to 0),
    and the new overlap is m = tanh(mhat).  Useful deep in the q -> m^2
    regime, where the full four-variable iteration becomes degenerate.
    """
    m = order.m
    one_minus_m2 = 1.0 - m * m
    if one_minus_m2 <= 0.0:
        raise ValueError("rs_low_alpha_update requires 1 - m^2 > 0")
    kappa = params.kappa
    kappa0 = params.kappa0
    scale_sq = 2.0 * one_minus_m2
    scale = math.sqrt(scale_sq)
    prefactor = 2.0 * params.alpha * m / (_SQRT_2PI * one_minus_m2**1.5)
    if kappa0 == 0.0:
        integral = (
            2.0
            * kappa
            * math.exp(-(kappa * kappa) / scale_sq)
            / (2.0 * float(erf(kappa / scale)))
        )
    else:
        nodes, weights = _margin_rule(kappa0)
        plus = kappa + nodes
        minus = kappa - nodes
        numerator = plus * np.exp(-(plus**2) / scale_sq) + minus * np.exp(
            -(minus**2) / scale_sq
        )
        denominator = erf(plus / scale) + erf(minus / scale)
        integral = float(np.sum(weights * numerator / denominator))
    mhat = prefactor * integral
    m_new = min(max(math.tanh(mhat), -_UNIT_OPEN), _UNIT_OPEN)
    return RsOrderParams(q=m_new * m_new, qhat=0.0, m=m_new, mhat=mhat)
