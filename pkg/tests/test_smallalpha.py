"""Tests for the rescaled potential, thresholds, and complexity-entropy curves."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.special import erf as scipy_erf

from sbp.ensemble import ModelParams, RescaledParams, kappa_sat, unrescale
from sbp.moments import local_entropy_first_moment
from sbp.smallalpha import (
    ClusterPoint,
    ThresholdResult,
    cluster_entropy,
    complexity,
    energetic_threshold,
    entropic_threshold,
    local_max_radius,
    potential_derivative,
    rescaled_potential,
    sigma_o,
    sigma_s_curve,
)

ENERGETIC_POINT = (1.238518, 1.351180)
ENTROPIC_POINT = (1.428754, 0.782487)


class TestRescaledPotential:
    def test_vanishes_from_above_at_small_radius(self):
        for r in (1e-2, 1e-4, 1e-6):
            v = rescaled_potential(r, 1.3, 0.0)
            assert 0.0 < v < 2.0 * r

    def test_zero_at_energetic_tangency(self):
        kappa, radius = ENERGETIC_POINT
        assert abs(rescaled_potential(radius, kappa, 0.0)) < 1e-4

    def test_matches_dense_simpson_oracle(self):
        r, kappa, kappa0 = 1.0, 1.5, 0.5
        zs = np.linspace(-kappa0, kappa0, 200001)
        density = np.exp(-0.5 * zs * zs) / math.sqrt(2.0 * math.pi)
        vals = np.log(
            0.5
            * (
                scipy_erf((kappa - zs) / math.sqrt(2.0 * r))
                + scipy_erf((kappa + zs) / math.sqrt(2.0 * r))
            )
        )
        oracle = r / 4.0 + simpson(vals * density, x=zs) / scipy_erf(
            kappa0 / math.sqrt(2.0)
        )
        assert rescaled_potential(r, kappa, kappa0) == pytest.approx(oracle, abs=1e-9)

    def test_quarter_slope_at_large_radius(self):
        v = rescaled_potential(1e4, 1.3, 0.0)
        assert v / 1e4 == pytest.approx(0.25, rel=2e-2)

    def test_rejects_nonpositive_radius(self):
        for bad in (0.0, -1.0, math.nan):
            with pytest.raises(ValueError):
                rescaled_potential(bad, 1.0, 0.0)


class TestLocalMaxRadius:
    def test_exists_below_entropic_threshold(self):
        found = local_max_radius(1.3, 0.0)
        assert found is not None
        r_star, curvature = found
        assert r_star > 0.0
        assert curvature < 0.0
        assert abs(potential_derivative(r_star, 1.3, 0.0)) <= 1e-10

    def test_derivative_changes_sign_across_root(self):
        r_star, _ = local_max_radius(1.3, 0.0)
        assert potential_derivative(r_star * 0.9, 1.3, 0.0) > 0.0
        assert potential_derivative(r_star * 1.1, 1.3, 0.0) < 0.0

    def test_absent_above_entropic_threshold(self):
        assert local_max_radius(1.5, 0.0) is None

    def test_potential_is_maximal_nearby(self):
        r_star, _ = local_max_radius(1.3, 0.0)
        v = rescaled_potential(r_star, 1.3, 0.0)
        assert v > rescaled_potential(r_star * 0.9, 1.3, 0.0)
        assert v > rescaled_potential(r_star * 1.1, 1.3, 0.0)


class TestEnergeticThreshold:
    def test_reference_constants(self):
        res = energetic_threshold(0.0)
        assert res.tilde_kappa_crit == pytest.approx(ENERGETIC_POINT[0], abs=1e-4)
        assert res.tilde_r_crit == pytest.approx(ENERGETIC_POINT[1], abs=1e-4)
        assert res.kind == "energetic"

    def test_defining_residuals(self):
        res = energetic_threshold(0.0)
        assert all(abs(x) <= 1e-8 for x in res.residuals)
        # The residual pair is (potential, potential derivative) at tangency.
        assert abs(
            rescaled_potential(res.tilde_r_crit, res.tilde_kappa_crit, 0.0)
        ) <= 1e-8

    def test_nonzero_reference_margin_satisfies_system(self):
        res = energetic_threshold(0.5)
        k, r = res.tilde_kappa_crit, res.tilde_r_crit
        assert abs(rescaled_potential(r, k, 0.5)) <= 1e-8
        assert abs(potential_derivative(r, k, 0.5)) <= 1e-8


class TestEntropicThreshold:
    def test_reference_constants(self):
        res = entropic_threshold(0.0)
        assert res.tilde_kappa_crit == pytest.approx(ENTROPIC_POINT[0], abs=1e-4)
        assert res.tilde_r_crit == pytest.approx(ENTROPIC_POINT[1], abs=1e-4)
        assert res.kind == "entropic"

    def test_above_energetic(self):
        assert (
            entropic_threshold(0.0).tilde_kappa_crit
            > energetic_threshold(0.0).tilde_kappa_crit
        )

    def test_minimal_over_reference_margins(self):
        grid = np.arange(0.0, 2.01, 0.25)
        values = [entropic_threshold(float(k0)).tilde_kappa_crit for k0 in grid]
        assert min(values) == values[0]
        assert all(v >= values[0] for v in values[1:])

    def test_threshold_result_validation(self):
        with pytest.raises(ValueError):
            ThresholdResult(1.0, 1.0, "energetic", (1e-3, 0.0))
        with pytest.raises(ValueError):
            ThresholdResult(1.0, 1.0, "bogus", (0.0, 0.0))


class TestClusterEntropy:
    def test_positive_below_threshold_and_composed(self):
        s = cluster_entropy(0.0, 1.3)
        assert s is not None and s > 0.0
        r_star, _ = local_max_radius(1.3, 0.0)
        assert s == rescaled_potential(r_star, 1.3, 0.0)

    def test_vanishes_as_margins_coincide(self):
        s = cluster_entropy(1.3 - 1e-3, 1.3)
        assert s is not None
        assert s < 1e-2

    def test_none_above_entropic_threshold(self):
        assert cluster_entropy(0.0, 1.5) is None

    def test_nondecreasing_in_kappa(self):
        grid = np.linspace(1.25, 1.42, 8)
        values = [cluster_entropy(0.0, float(k)) for k in grid]
        assert all(v is not None for v in values)
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


class TestComplexity:
    def test_exact_zero_at_saturation_margin(self):
        alpha = 0.01
        kappa0 = kappa_sat(alpha)
        tilde_kappa0 = kappa0 / math.sqrt(-alpha / math.log(alpha))
        exact, _ = complexity(tilde_kappa0, alpha)
        assert abs(exact) <= 1e-10

    def test_rescaled_offset_vanishes_at_sqrt_pi_over_two(self):
        _, rescaled = complexity(math.sqrt(math.pi / 2.0), 0.01)
        assert rescaled - sigma_o(0.01) == pytest.approx(0.0, abs=1e-15)

    def test_exact_and_rescaled_agree_at_small_alpha(self):
        exact, rescaled = complexity(0.5, 1e-3)
        assert abs(exact - rescaled) / abs(exact) <= 5e-2

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            complexity(0.5, 1.0)
        with pytest.raises(ValueError):
            complexity(0.0, 0.1)
        with pytest.raises(ValueError):
            sigma_o(2.0)


class TestSigmaSCurve:
    def test_sorted_and_bounded_by_zero_margin_entropy(self):
        grid = list(np.arange(0.05, 1.35, 0.05))
        curve = sigma_s_curve(1.35, 0.01, grid)
        assert len(curve) > 0
        assert all(
            a.entropy_s <= b.entropy_s for a, b in zip(curve, curve[1:])
        )
        top = cluster_entropy(0.0, 1.35)
        assert all(p.entropy_s <= top + 1e-12 for p in curve)

    def test_early_termination_above_entropic_threshold(self):
        grid = list(np.arange(0.05, 1.5, 0.05))
        curve = sigma_s_curve(1.5, 0.01, grid)
        present = {p.tilde_kappa0 for p in curve}
        assert len(curve) < len(grid)
        assert min(present) > 0.5  # small reference margins have no cluster

    def test_locally_convex_near_zero_entropy(self):
        curve = sigma_s_curve(1.3, 0.01, [1.23, 1.25, 1.27, 1.29])
        xs = [p.entropy_s for p in curve]
        ys = [p.complexity_minus_sigma_o for p in curve]
        assert len(curve) == 4
        for i in range(len(xs) - 2):
            d1 = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            d2 = (ys[i + 2] - ys[i + 1]) / (xs[i + 2] - xs[i + 1])
            assert (d2 - d1) / (xs[i + 2] - xs[i]) > 0.0

    def test_rejects_empty_grid(self):
        with pytest.raises(ValueError):
            sigma_s_curve(1.3, 0.01, [])

    def test_cluster_point_validation(self):
        with pytest.raises(ValueError):
            ClusterPoint(0.5, 1.3, -1.0, 0.1, 0.0)
        with pytest.raises(ValueError):
            ClusterPoint(0.5, 1.3, 0.5, math.inf, 0.0)


class TestConsistencyWithMoments:
    def test_first_moment_matches_rescaled_potential_at_small_alpha(self):
        alpha = 1e-4
        tilde_r, tilde_kappa = 0.2, 1.3
        params, m = unrescale(RescaledParams(tilde_kappa, 0.0, tilde_r), alpha)
        r = 0.5 * (1.0 - m)
        finite_alpha = local_entropy_first_moment(r, params) / alpha
        limit = rescaled_potential(tilde_r, tilde_kappa, 0.0)
        assert abs(finite_alpha - limit) <= 5e-2
