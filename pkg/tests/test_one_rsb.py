"""Tests for the cluster-resolved (two-level) replica solver."""

import math

import pytest

from sbp.ensemble import ModelParams
from sbp.numerics import gauss_hermite_rule, log_erf
from sbp.one_rsb import (
    BranchSet,
    OneRsbPoint,
    branch_scan,
    entropy_complexity,
    f_update,
    g_update,
    iterate_fixed_point,
    max_entropy_regime,
    min_entropy_regime,
    newton_solve,
    one_rsb_potential,
)
from sbp.planted_rs import RsOrderParams, rs_low_alpha_update
from sbp.smallalpha import cluster_entropy, complexity

P04 = ModelParams(alpha=0.5, kappa=0.4)

# Dense-quadrature reference values (40-digit adaptive integration of the
# defining two-Gaussian-average expression).
DENSE_QUADRATURE_POTENTIAL = [
    # (q1, qhat1, x, alpha, kappa, phi)
    (0.93, 1.62, 2.0, 0.5, 0.4, 0.045506854587982811405),
    (0.7, 0.9, 3.0, 0.5, 0.4, 0.1617168547971651295728),
    (1e-12, 1e-12, 2.0, 0.5, 0.4, 0.2178285982474615523103),
    (0.999, 0.05, 30.0, 0.5, 0.47, 2.195258353950830131421),
]


def zero_overlap_potential(x: float, params: ModelParams) -> float:
    """Closed form at q1 = qhat1 = 0: x (log 2 + alpha log erf(kappa/sqrt(2)))."""
    return x * (math.log(2.0) + params.alpha * log_erf(params.kappa / math.sqrt(2.0)))


class TestPotential:
    def test_dense_quadrature_reference(self):
        for q1, qh, x, a, k, ref in DENSE_QUADRATURE_POTENTIAL:
            got = one_rsb_potential(q1, qh, x, ModelParams(alpha=a, kappa=k))
            assert got == pytest.approx(ref, abs=1e-10)

    def test_iterated_fixed_point_matches_dense_quadrature(self):
        # From init (0.5, 0.4) at (alpha, kappa, x) = (0.5, 0.4, 2) the damped
        # iteration lands on the zero-overlap solution; its potential must
        # match the dense-quadrature value there to 1e-8.
        pt = iterate_fixed_point((0.5, 0.4), 2.0, P04)
        assert pt.phi == pytest.approx(0.2178285982474615523103, abs=1e-8)

    def test_zero_overlap_closed_form(self):
        for x in (0.5, 2.0, 10.0, 100.0):
            got = one_rsb_potential(1e-12, 1e-12, x, P04)
            assert got == pytest.approx(zero_overlap_potential(x, P04), abs=1e-11 * max(1.0, x))

    def test_x_equal_one_reduces_to_annealed_average(self):
        # At x = 1 the inner average collapses: the potential equals
        # alpha log E_z[mass(z)] + log 2 for any (q1, qhat1).
        q1, qh = 0.62, 1.1
        phi = one_rsb_potential(q1, qh, 1.0, P04)
        rule = gauss_hermite_rule(201)
        total = 0.0
        sq, v = math.sqrt(q1), 1.0 - q1
        for z, w in zip(rule.nodes, rule.weights):
            a = (P04.kappa - sq * z) / math.sqrt(2.0 * v)
            b = (P04.kappa + sq * z) / math.sqrt(2.0 * v)
            total += w * 0.5 * (math.erf(a) + math.erf(b))
        ref = P04.alpha * math.log(total) + math.log(2.0)
        assert phi == pytest.approx(ref, abs=1e-12)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            one_rsb_potential(1.5, 0.1, 2.0, P04)
        with pytest.raises(ValueError):
            one_rsb_potential(0.5, -0.1, 2.0, P04)
        with pytest.raises(ValueError):
            one_rsb_potential(0.5, 0.1, 0.0, P04)


class TestUpdateMaps:
    def test_gradient_consistency(self):
        # The update maps are the stationarity conditions of the potential:
        # d(phi)/d(q1)    = (x (1 - x) / 2) (qhat1 - f(q1))
        # d(phi)/d(qhat1) = (x (1 - x) / 2) (q1 - g(qhat1))
        q1, qh, x = 0.7, 0.9, 3.0
        h = 1e-6
        d_q1 = (one_rsb_potential(q1 + h, qh, x, P04) - one_rsb_potential(q1 - h, qh, x, P04)) / (2 * h)
        d_qh = (one_rsb_potential(q1, qh + h, x, P04) - one_rsb_potential(q1, qh - h, x, P04)) / (2 * h)
        pref = 0.5 * x * (1.0 - x)
        assert d_q1 == pytest.approx(pref * (qh - f_update(q1, x, P04)), abs=2e-9)
        assert d_qh == pytest.approx(pref * (q1 - g_update(qh, x)), abs=2e-9)

    def test_inner_map_saturates(self):
        assert g_update(50.0, 5.0) > 0.999

    def test_inner_map_small_argument(self):
        # g(qhat1) ~ qhat1 for small argument (tanh^2 expansion).
        assert g_update(1e-6, 3.0) == pytest.approx(1e-6, rel=1e-4)

    def test_x_equal_one_is_singular(self):
        with pytest.raises(ValueError):
            f_update(0.5, 1.0, P04)
        with pytest.raises(ValueError):
            g_update(0.5, 1.0)

    def test_regular_across_x_equal_one(self):
        # The 1/(1 - x) prefactor cancels against the vanishing numerator:
        # f extends continuously through x = 1 from both sides.
        q1 = 0.7
        diffs = [
            abs(f_update(q1, 1.0 + eps, P04) - f_update(q1, 1.0 - eps, P04))
            for eps in (1e-2, 1e-3, 1e-4)
        ]
        assert diffs[0] > diffs[1] > diffs[2]
        assert diffs[2] < 2e-4
        # the potential itself is smooth across x = 1
        for eps in (1e-4, 1e-6):
            pp = one_rsb_potential(q1, 0.9, 1.0 + eps, P04)
            pm = one_rsb_potential(q1, 0.9, 1.0 - eps, P04)
            p0 = one_rsb_potential(q1, 0.9, 1.0, P04)
            assert abs(pp - 2.0 * p0 + pm) < 10.0 * eps * eps

    def test_range(self):
        assert 0.0 < g_update(0.9, 3.0) < 1.0
        assert f_update(0.7, 3.0, P04) > 0.0


class TestSolvers:
    def test_iterate_reaches_zero_overlap(self):
        # At kappa = 0.45, x = 10 the only attractor from a mid-range start
        # is the zero-overlap solution.
        pt = iterate_fixed_point((0.5, 0.4), 10.0, ModelParams(alpha=0.5, kappa=0.45))
        assert pt.q1 < 1e-9 and pt.qhat1 < 1e-9
        assert pt.stable_under_iteration
        assert pt.phi == pytest.approx(
            zero_overlap_potential(10.0, ModelParams(alpha=0.5, kappa=0.45)), abs=1e-9
        )

    def test_newton_agrees_with_iterate(self):
        # The cluster fixed point at kappa = 0.4, x = 12 is iteration-stable,
        # so both solvers must land on it from the same neighborhood.
        it = iterate_fixed_point((0.92, 0.3), 12.0, P04, damping=0.5)
        nw = newton_solve((0.92, 0.3), 12.0, P04)
        assert nw.q1 == pytest.approx(it.q1, abs=1e-10)
        assert nw.qhat1 == pytest.approx(it.qhat1, abs=1e-10)
        assert it.stable_under_iteration

    def test_newton_residuals(self):
        pt = newton_solve((1.0 - 0.025, 0.135), 20.0, P04)
        r1 = abs(pt.qhat1 - f_update(pt.q1, 20.0, P04))
        r2 = abs(pt.q1 - g_update(pt.qhat1, 20.0))
        assert max(r1, r2) <= 1e-12
        assert 1.0 - pt.q1 == pytest.approx(2.504186e-02, rel=1e-5)
        assert pt.qhat1 == pytest.approx(1.353806e-01, rel=1e-5)

    def test_unstable_fixed_point_repels(self):
        # The low-entropy fixed point at kappa = 0.4, x = 20 has spectral
        # radius well above one: a 1e-6 relative perturbation grows under the
        # undamped alternation map.
        pt = newton_solve((1.0 - 0.009, 0.62), 20.0, P04)
        assert not pt.stable_under_iteration
        q1 = pt.q1 * (1.0 - 1e-6)
        drift = abs(q1 - pt.q1)
        for _ in range(40):
            qh = f_update(q1, 20.0, P04)
            q1 = g_update(qh, 20.0)
            drift = max(drift, abs(q1 - pt.q1))
            if drift > 1e-3:
                break
        assert drift > 1e-3

    def test_stability_straddle_along_cluster_branch(self):
        # The same family crosses radius one between x = 12 and x = 15.
        lo = newton_solve((0.92, 0.33), 12.0, P04)
        hi = newton_solve((lo.q1, lo.qhat1), 15.0, P04)
        assert lo.stable_under_iteration
        assert not hi.stable_under_iteration

    def test_iterate_boundary_escape(self):
        with pytest.raises(RuntimeError, match="frozen boundary"):
            iterate_fixed_point((1.0 - 1e-6, 5.0), 30.0, P04, damping=1.0, max_iter=400)

    def test_envelope_identity(self):
        pt = newton_solve((1.0 - 0.025, 0.135), 20.0, P04)
        assert abs(pt.complexity_sigma + 20.0 * pt.entropy_s - pt.phi) <= 1e-9
        s, sigma = entropy_complexity(pt, P04)
        assert s == pytest.approx(pt.entropy_s, abs=1e-12)
        assert sigma == pytest.approx(pt.complexity_sigma, abs=1e-12)

    def test_complexity_slope_is_minus_x(self):
        # Parametric derivative along a branch: dSigma/ds = -x within 5%.
        a = newton_solve((0.92, 0.33), 12.0, P04)
        b = newton_solve((a.q1, a.qhat1), 12.5, P04)
        slope = (b.complexity_sigma - a.complexity_sigma) / (b.entropy_s - a.entropy_s)
        assert slope == pytest.approx(-12.25, rel=0.05)


class TestBranchScan:
    def test_four_families_and_no_gap_below_breakpoint(self):
        bs = branch_scan(P04, [2.0, 4.0, 8.0, 11.0, 12.0, 15.0, 20.0, 30.0])
        assert isinstance(bs, BranchSet)
        fams = bs.branches()
        assert len(fams) >= 4  # zero-overlap family plus three nontrivial ones
        assert 0 in fams
        assert not bs.gap_detected
        for pt in bs.points:
            assert abs(pt.complexity_sigma + pt.x * pt.entropy_s - pt.phi) <= 1e-9
            assert 0.0 < pt.q1 < 1.0 and pt.qhat1 > 0.0

    def test_gap_appears_above_breakpoint(self):
        grid = [2.0, 3.0, 4.0, 5.0, 5.5, 6.0, 6.5, 7.0, 7.5, 8.0, 10.0, 12.0]
        below = branch_scan(ModelParams(alpha=0.5, kappa=0.44), grid)
        above = branch_scan(ModelParams(alpha=0.5, kappa=0.47), grid)
        assert not below.gap_detected
        assert above.gap_detected
        lo, hi = above.gap_interval
        assert 0.0 < lo < hi < 0.02

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            branch_scan(P04, [0.05, 2.0])
        with pytest.raises(ValueError):
            branch_scan(P04, [2.0, 2e4])
        with pytest.raises(ValueError):
            branch_scan(P04, [])


class TestVanishingEntropyAnchor:
    def test_complexity_at_vanishing_entropy(self):
        # Along the low-entropy branch, Sigma(s -> 0) equals
        # log 2 + alpha log erf(kappa / sqrt(2)); the approach is a
        # square-root cusp, so extrapolate Sigma linearly in sqrt(s).
        pts = []
        seed = (1.0 - 2.2e-8, 3.17e-3)
        for x in (3e3, 1e4):
            pt = newton_solve(seed, x, P04)
            seed = (pt.q1, pt.qhat1)
            pts.append(pt)
        (s1, c1), (s2, c2) = [(p.entropy_s, p.complexity_sigma) for p in pts]
        r1, r2 = math.sqrt(s1), math.sqrt(s2)
        sigma0 = (c2 * r1 - c1 * r2) / (r1 - r2)
        ref = math.log(2.0) + 0.5 * log_erf(0.4 / math.sqrt(2.0))
        assert sigma0 == pytest.approx(ref, abs=1e-3)


class TestAsymptoticRegimes:
    def test_max_entropy_matches_cluster_entropy(self):
        alpha = 1e-4
        scale = math.sqrt(-math.log(alpha) / alpha)
        for tk in (1.25, 1.30, 1.35):
            mp = ModelParams(alpha=alpha, kappa=tk / scale)
            q1, qh1, s, sigma = max_entropy_regime(mp, 1e3)
            assert sigma == 0.0
            ce = cluster_entropy(0.0, tk)
            assert s / alpha == pytest.approx(ce, rel=0.02)

    def test_max_entropy_solves_reduced_planted_equations(self):
        # Under q1 = m^2, (x - 1) qhat1 = mhat the output equation of the
        # reduced planted-channel system holds exactly, and the input
        # equation m = 1 - 2 exp(-2 mhat) matches its squared form
        # (the overlap closure) to 4 exp(-4 mhat) < 1e-6.
        alpha = 1e-4
        scale = math.sqrt(-math.log(alpha) / alpha)
        mp = ModelParams(alpha=alpha, kappa=1.3 / scale)
        x = 1e3
        q1, qh1, s, _ = max_entropy_regime(mp, x)
        mhat = (x - 1.0) * qh1
        order = RsOrderParams(q=q1, qhat=0.0, m=math.sqrt(q1), mhat=0.0)
        mhat_eq = rs_low_alpha_update(order, mp).mhat
        assert abs(mhat - mhat_eq) <= 1e-6 * mhat_eq
        closure_gap = abs((1.0 - 4.0 * math.exp(-2.0 * mhat)) - (1.0 - 2.0 * math.exp(-2.0 * mhat)) ** 2)
        assert closure_gap <= 1e-6

    def test_max_entropy_requires_clustered_phase(self):
        # Past the vanishing point of the local-entropy maximum there is no
        # clustered solution to expand around.
        alpha = 1e-4
        scale = math.sqrt(-math.log(alpha) / alpha)
        with pytest.raises(ValueError):
            max_entropy_regime(ModelParams(alpha=alpha, kappa=1.5 / scale), 1e3)
        with pytest.raises(ValueError):
            max_entropy_regime(ModelParams(alpha=alpha, kappa=1.3 / scale), 5.0)

    def test_min_entropy_complexity_limit(self):
        mp = ModelParams(alpha=0.02, kappa=0.3)
        q1, qh1, s, sigma = min_entropy_regime(mp, 1e3)
        ref = math.log(2.0) + 0.02 * log_erf(0.3 / math.sqrt(2.0))
        assert sigma == pytest.approx(ref, abs=1e-2)
        assert 0.0 < s < 1e-6
        assert 0.0 < q1 < 1.0 and qh1 > 0.0

    def test_min_entropy_decreases_with_x(self):
        mp = ModelParams(alpha=0.02, kappa=0.3)
        svals = [min_entropy_regime(mp, xx)[2] for xx in (10.0, 100.0, 1000.0)]
        assert svals[0] > svals[1] > svals[2] > 0.0

    def test_min_entropy_no_solution(self):
        with pytest.raises(ValueError):
            min_entropy_regime(ModelParams(alpha=5.0, kappa=0.3), 10.0)
        with pytest.raises(ValueError):
            min_entropy_regime(ModelParams(alpha=0.02, kappa=0.3), 5.0)

    def test_min_entropy_joins_planted_endpoint(self):
        # At small alpha the minimum-entropy regime lands on the
        # vanishing-entropy end of the cluster curve: Sigma equals the
        # complexity of references at equal margins, with s below the
        # whole cluster-entropy range.
        alpha = 1e-4
        scale = math.sqrt(-math.log(alpha) / alpha)
        mp = ModelParams(alpha=alpha, kappa=1.3 / scale)
        q1, qh1, s, sigma = min_entropy_regime(mp, 1e3)
        exact, _ = complexity(1.3, alpha)
        assert sigma == pytest.approx(exact, abs=1e-5)
        assert 0.0 < s < alpha * cluster_entropy(0.0, 1.3)
