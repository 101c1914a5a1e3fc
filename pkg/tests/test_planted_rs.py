"""Tests for the planted-model replica-symmetric free energy and its solver."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from sbp.ensemble import ModelParams, RescaledParams, unrescale
from sbp.numerics import log_erf
from sbp.planted_rs import (
    RsOrderParams,
    RsSolveReport,
    default_cluster_init,
    init_from_radius,
    rs_free_energy,
    rs_low_alpha_update,
    rs_solve,
    rs_update,
    saturated_overlap,
)
from sbp.smallalpha import cluster_entropy, local_max_radius

PARAMS = ModelParams(alpha=0.01, kappa=0.05, kappa0=0.03)
CLUSTER_PARAMS = ModelParams(alpha=0.01, kappa=0.05, kappa0=0.045)

# One hats-then-prior sweep from (q, qhat, m, mhat) = (0.99, 50, 0.99, 5) at
# (alpha, kappa, kappa0) = (0.01, 0.05, 0.03), evaluated independently with
# 25-digit adaptive quadrature and numeric inner derivatives of the band mass.
ORACLE_SWEEP = {
    "mhat": 0.91338495017609407218,
    "qhat": 0.8682497957160762667,
    "m": 0.52822884408072599272,
    "q": 0.51890390104015938189,
}


def trivial_entropy(params: ModelParams) -> float:
    return math.log(2.0) + params.alpha * log_erf(params.kappa / math.sqrt(2.0))


class TestOrderParamsValidation:
    def test_accepts_generic_point(self):
        o = RsOrderParams(q=0.5, qhat=1.0, m=0.3, mhat=0.2)
        assert o.q == 0.5 and o.mhat == 0.2

    def test_rejects_q_at_or_above_one(self):
        with pytest.raises(ValueError):
            RsOrderParams(q=1.0, qhat=0.0, m=0.0, mhat=0.0)

    def test_rejects_negative_q(self):
        with pytest.raises(ValueError):
            RsOrderParams(q=-0.1, qhat=0.0, m=0.0, mhat=0.0)

    def test_rejects_negative_qhat(self):
        with pytest.raises(ValueError):
            RsOrderParams(q=0.5, qhat=-1e-6, m=0.0, mhat=0.0)

    def test_rejects_magnetization_outside_open_interval(self):
        for m in (-1.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                RsOrderParams(q=0.5, qhat=0.0, m=m, mhat=0.0)

    def test_rejects_overlap_below_squared_magnetization(self):
        with pytest.raises(ValueError):
            RsOrderParams(q=0.25, qhat=0.0, m=0.6, mhat=0.0)

    def test_allows_overlap_at_squared_magnetization_slack(self):
        o = RsOrderParams(q=0.36 - 0.5e-9, qhat=0.0, m=0.6, mhat=0.0)
        assert o.m == 0.6

    def test_rejects_non_finite_components(self):
        with pytest.raises(ValueError):
            RsOrderParams(q=float("nan"), qhat=0.0, m=0.0, mhat=0.0)


class TestFreeEnergy:
    def test_rejects_degenerate_overlap(self):
        order = RsOrderParams(q=0.25 - 1e-12, qhat=0.0, m=0.5, mhat=0.0)
        with pytest.raises(ValueError):
            rs_free_energy(order, PARAMS)

    def test_rejects_bad_reference_sign(self):
        order = RsOrderParams(q=0.5, qhat=1.0, m=0.3, mhat=0.2)
        with pytest.raises(ValueError):
            rs_free_energy(order, PARAMS, x_o=2)

    def test_decoupled_point_gives_annealed_value(self):
        order = RsOrderParams(q=1e-10, qhat=0.0, m=0.0, mhat=0.0)
        value = rs_free_energy(order, PARAMS)
        assert abs(value - trivial_entropy(PARAMS)) < 1e-10

    def test_value_is_even_in_reference_sign(self):
        order = RsOrderParams(q=0.6, qhat=2.0, m=0.4, mhat=1.0)
        plus = rs_free_energy(order, PARAMS, x_o=1)
        minus = rs_free_energy(order, PARAMS, x_o=-1)
        assert plus == pytest.approx(minus, abs=1e-14)


class TestUpdate:
    def test_zero_magnetization_is_closed(self):
        order = RsOrderParams(q=0.5, qhat=2.0, m=0.0, mhat=0.0)
        new = rs_update(order, PARAMS)
        assert new.m == 0.0
        assert abs(new.mhat) < 1e-15

    def test_image_stays_in_range(self):
        for q, qhat, m, mhat in [
            (0.3, 0.5, 0.1, 0.2),
            (0.9, 30.0, -0.8, -3.0),
            (0.9999, 100.0, 0.999, 8.0),
            (0.05, 1e-3, 0.0, 0.0),
        ]:
            new = rs_update(RsOrderParams(q=q, qhat=qhat, m=m, mhat=mhat), PARAMS)
            assert -1.0 < new.m < 1.0
            assert 0.0 <= new.q < 1.0
            assert abs(new.m) <= math.sqrt(new.q) + 1e-15
            assert new.qhat >= 0.0

    def test_single_sweep_matches_dense_quadrature(self):
        order = RsOrderParams(q=0.99, qhat=50.0, m=0.99, mhat=5.0)
        new = rs_update(order, PARAMS)
        for name, ref in ORACLE_SWEEP.items():
            assert getattr(new, name) == pytest.approx(ref, abs=1e-8)

    def test_map_is_odd_in_magnetization_pair(self):
        order = RsOrderParams(q=0.7, qhat=3.0, m=0.5, mhat=1.5)
        flipped = RsOrderParams(q=0.7, qhat=3.0, m=-0.5, mhat=-1.5)
        a = rs_update(order, PARAMS)
        b = rs_update(flipped, PARAMS)
        assert a.q == pytest.approx(b.q, abs=1e-14)
        assert a.qhat == pytest.approx(b.qhat, abs=1e-14)
        assert a.m == pytest.approx(-b.m, abs=1e-14)
        assert a.mhat == pytest.approx(-b.mhat, abs=1e-14)

    def test_hat_map_is_continuous_across_degenerate_overlap_switch(self):
        # The channel switches to its exact q -> m^2 limit once q - m^2 drops
        # below 1e-10 * (1 - q); both sides must agree at the boundary.
        m = 0.9
        below = rs_update(RsOrderParams(q=m * m + 1e-13, qhat=1.0, m=m, mhat=5.0), PARAMS)
        above = rs_update(RsOrderParams(q=m * m + 1e-11, qhat=1.0, m=m, mhat=5.0), PARAMS)
        assert below.mhat == pytest.approx(above.mhat, abs=1e-10)
        assert below.qhat == pytest.approx(above.qhat, abs=1e-10)


class TestSolver:
    def test_collapse_below_cluster_window_reaches_decoupled_point(self):
        report = rs_solve(PARAMS, init=default_cluster_init())
        assert report.converged
        assert report.residual <= 1e-12
        assert abs(report.fixed_point.m) < 1e-6
        assert report.entropy == pytest.approx(trivial_entropy(PARAMS), abs=1e-12)

    def test_cluster_branch_fixed_point(self):
        report = rs_solve(CLUSTER_PARAMS, init=default_cluster_init(), tol=1e-9)
        fp = report.fixed_point
        assert report.converged
        assert report.residual <= 1e-9
        assert fp.m > 0.999
        # frozen regression value for the cluster-branch entropy
        assert report.entropy == pytest.approx(1.8427953214938952e-05, abs=1e-10)
        # reported entropy is the free energy evaluated at the fixed point
        assert report.entropy == pytest.approx(rs_free_energy(fp, CLUSTER_PARAMS), abs=1e-15)
        # annealed upper bound
        assert report.entropy <= trivial_entropy(CLUSTER_PARAMS) + 1e-9

    def test_reapplying_update_at_fixed_point_is_stationary(self):
        report = rs_solve(CLUSTER_PARAMS, init=default_cluster_init(), tol=1e-9)
        fp = report.fixed_point
        new = rs_update(fp, CLUSTER_PARAMS)
        for name in ("q", "qhat", "m", "mhat"):
            assert abs(getattr(new, name) - getattr(fp, name)) <= 1e-9

    def test_solver_complexity_matches_reference_margin_mass(self):
        report = rs_solve(CLUSTER_PARAMS, init=default_cluster_init(), tol=1e-9)
        expected = math.log(2.0) + CLUSTER_PARAMS.alpha * log_erf(
            CLUSTER_PARAMS.kappa0 / math.sqrt(2.0)
        )
        assert report.complexity == pytest.approx(expected, abs=1e-15)

    def test_flipped_reference_mirrors_fixed_point(self):
        plus = rs_solve(CLUSTER_PARAMS, init=default_cluster_init(), tol=1e-9)
        minus = rs_solve(CLUSTER_PARAMS, init=default_cluster_init(), tol=1e-9, x_o=-1)
        assert minus.fixed_point.q == pytest.approx(plus.fixed_point.q, abs=1e-12)
        assert minus.fixed_point.qhat == pytest.approx(plus.fixed_point.qhat, abs=1e-10)
        assert minus.fixed_point.m == pytest.approx(-plus.fixed_point.m, abs=1e-12)
        assert minus.fixed_point.mhat == pytest.approx(-plus.fixed_point.mhat, abs=1e-10)
        assert minus.entropy == pytest.approx(plus.entropy, abs=1e-14)

    def test_entropy_vanishes_as_reference_margin_approaches_kappa(self):
        report = rs_solve(CLUSTER_PARAMS, init=default_cluster_init(), tol=1e-9)
        entropies = [report.entropy]
        warm = report.fixed_point
        for kappa0 in (0.047, 0.049):
            p = ModelParams(alpha=0.01, kappa=0.05, kappa0=kappa0)
            r = rs_solve(p, init=warm, tol=1e-7)
            assert r.converged
            entropies.append(r.entropy)
            warm = r.fixed_point
        assert entropies[0] > entropies[1] > entropies[2] > 0.0
        assert entropies[2] < 1e-6

    def test_equal_margins_reported_not_thrown(self):
        frozen = ModelParams(alpha=0.01, kappa=0.05, kappa0=0.05)
        report = rs_solve(frozen, init=default_cluster_init(), tol=1e-9)
        assert not report.converged
        assert math.isfinite(report.residual)
        assert report.iterations < 10_000

    def test_iteration_budget_respected(self):
        report = rs_solve(PARAMS, init=default_cluster_init(), max_iter=25)
        assert report.iterations <= 25
        assert not report.converged


class TestLowDensityRegime:
    """Behavior at alpha = 1e-4, where margins shrink like sqrt(alpha/L)."""

    ALPHA = 1e-4
    L = -math.log(1e-4)
    TILDE_KAPPA = 1.0

    @classmethod
    def _tail_mhat(cls, r: float) -> float:
        k = cls.TILDE_KAPPA
        return (
            2.0 * k * cls.L * math.exp(-k * k / (2.0 * r))
            / (math.sqrt(2.0 * math.pi) * r**1.5 * math.erf(k / math.sqrt(2.0 * r)))
        )

    @classmethod
    def _closure_mhat(cls, r: float) -> float:
        return 0.5 * (cls.L + math.log(4.0 * cls.L / r))

    @classmethod
    def saddle_radius(cls) -> float:
        # Smallest radius where the tail equation meets the tanh closure.
        return brentq(
            lambda r: cls._tail_mhat(r) - cls._closure_mhat(r), 0.16, 0.41, xtol=1e-14
        )

    @classmethod
    def saddle_params(cls):
        r1 = cls.saddle_radius()
        rescaled = RescaledParams(
            tilde_kappa=cls.TILDE_KAPPA, tilde_kappa0=0.0, tilde_r=r1
        )
        params, _ = unrescale(rescaled, cls.ALPHA)
        return params, r1

    def test_full_and_reduced_updates_agree_near_cluster_saddle(self):
        params, r1 = self.saddle_params()
        seed = init_from_radius(params, r1)
        full = rs_update(seed, params)
        reduced = rs_low_alpha_update(seed, params)
        assert abs(full.m - reduced.m) <= 1e-3
        assert full.mhat == pytest.approx(reduced.mhat, rel=1e-10)
        # with a zero-width reference margin the full channel degenerates
        # exactly onto the reduced two-variable closure
        assert full.qhat == 0.0
        assert full.q == pytest.approx(full.m * full.m, abs=1e-15)

    def test_solver_lands_on_cluster_saddle(self):
        params, r1 = self.saddle_params()
        report = rs_solve(params, init=init_from_radius(params, r1), tol=1e-7)
        assert report.converged
        radius = (1.0 - report.fixed_point.m ** 2) * self.L / self.ALPHA
        assert radius == pytest.approx(r1, rel=1e-4)

    def test_solved_entropy_tracks_rescaled_cluster_entropy(self):
        # The cluster entropy in rescaled units carries a finite-density
        # correction of relative size ~ (log L + log(4/r) + 1) / L from the
        # binary-entropy term at 1 - m^2 = alpha r / L.  At alpha = 1e-4
        # (L ~ 9.2) that factor is ~1, so the solved value sits roughly a
        # factor two above the limit curve; 5% agreement needs L >~ 170.
        params, r1 = self.saddle_params()
        report = rs_solve(params, init=init_from_radius(params, r1), tol=1e-7)
        assert report.converged
        limit = cluster_entropy(0.0, self.TILDE_KAPPA)
        assert limit is not None
        solved = report.entropy / self.ALPHA
        deviation = abs(solved - limit) / abs(limit)
        assert deviation <= 0.05, (
            f"solved entropy {solved:.8f} vs limiting cluster entropy "
            f"{limit:.8f}: relative deviation {deviation:.2%}"
        )


class TestSaturatedOverlap:
    def test_matches_tanh_closure_deep_in_saturation(self):
        for mhat in (8.0, 12.0, 20.0):
            assert saturated_overlap(mhat) == pytest.approx(math.tanh(mhat), abs=1e-13)

    def test_approaches_one(self):
        gaps = [1.0 - saturated_overlap(mh) for mh in (5.0, 10.0, 15.0)]
        assert gaps[0] > gaps[1] > gaps[2] >= 0.0


class TestInitHelpers:
    def test_default_cluster_init_matches_recommended_seed(self):
        seed = default_cluster_init()
        assert seed.m == pytest.approx(1.0 - 1e-3, abs=1e-15)
        assert seed.q == pytest.approx(seed.m**2 + 1e-6, abs=1e-15)
        assert seed.mhat == 5.0
        assert seed.qhat == 1e-3

    def test_radius_seed_roundtrip(self):
        params = ModelParams(alpha=1e-4, kappa=0.013, kappa0=0.0)
        seed = init_from_radius(params, 0.2)
        L = -math.log(params.alpha)
        assert (1.0 - seed.m**2) * L / params.alpha == pytest.approx(0.2, rel=1e-9)
        assert seed.q == pytest.approx(seed.m**2, abs=1e-16)
        assert seed.qhat == 0.0
        assert seed.mhat == pytest.approx(math.atanh(seed.m), rel=1e-12)
