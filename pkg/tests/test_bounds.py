import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from nflbounds import bounds
from nflbounds.bounds import BelowThresholdError, VacuousBoundError
from nflbounds.scalar import DomainError, std_normal_cdf
from tests import oracles

E2 = math.exp(-2.0)
probs = st.floats(1e-9, 1.0 - 1e-9)
sigmas = st.floats(0.01, 100.0)


class TestCriticalEpsilon:
    def test_examples(self):
        assert bounds.critical_epsilon(E2, 1.0) == pytest.approx(2.0, rel=1e-15)
        assert bounds.critical_epsilon(1.0, 5.0) == 0.0
        assert bounds.critical_epsilon(0.1, 1.0) == pytest.approx(oracles.EPS_CRIT_01, rel=1e-15)

    def test_perfect_classifier_is_vacuous(self):
        with pytest.raises(VacuousBoundError, match="vacuous"):
            bounds.critical_epsilon(0.0, 1.0)

    @pytest.mark.parametrize("err,sigma", [(-0.1, 1), (1.1, 1), (0.1, 0), (0.1, -1)])
    def test_domain(self, err, sigma):
        with pytest.raises(DomainError):
            bounds.critical_epsilon(err, sigma)

    def test_lq_examples(self):
        assert bounds.critical_epsilon_q(E2, 1, 100, math.inf) == pytest.approx(0.2, rel=1e-15)
        assert bounds.critical_epsilon_q(E2, 1, 100, 2) == pytest.approx(2.0, rel=1e-15)
        assert bounds.critical_epsilon_q(0.1, 1, 16, 1) == pytest.approx(4 * oracles.EPS_CRIT_01, rel=1e-15)

    @given(probs, sigmas, st.integers(1, 10_000))
    def test_linf_is_geodesic_over_sqrt_p(self, err, sigma, p):
        assert bounds.critical_epsilon_q(err, sigma, p, "inf") == pytest.approx(
            bounds.critical_epsilon(err, sigma) / math.sqrt(p), rel=1e-12)


class TestAccuracyBound:
    def test_examples(self):
        crit = oracles.EPS_CRIT_01
        assert bounds.adv_acc_bound_geodesic(0.9, 1, crit) == 0.9
        assert bounds.adv_acc_bound_geodesic(0.9, 1, 2 * crit) == pytest.approx(0.1, rel=1e-12)
        assert bounds.adv_acc_bound_geodesic(0.9, 1, 3.0) == pytest.approx(oracles.ADV_BOUND_09_1_3, rel=1e-13)

    def test_lq_examples(self):
        e_inf = oracles.EPS_CRIT_01 / 10
        assert bounds.adv_acc_bound_lq(0.9, 1, 100, math.inf, e_inf) == 0.9
        assert bounds.adv_acc_bound_lq(0.9, 1, 100, math.inf, 2 * e_inf) == pytest.approx(0.1, rel=1e-12)
        assert bounds.adv_acc_bound_lq(0.9, 1, 100, 2, 3.0) == pytest.approx(oracles.ADV_BOUND_09_1_3, rel=1e-13)

    def test_below_transition_raises(self):
        with pytest.raises(BelowThresholdError, match="below the phase transition"):
            bounds.adv_acc_bound_geodesic(0.9, 1, 1.0)
        with pytest.raises(BelowThresholdError):
            bounds.adv_acc_bound_lq(0.9, 1, 100, math.inf, 0.1)

    def test_perfect_accuracy_is_vacuous(self):
        with pytest.raises(VacuousBoundError):
            bounds.adv_acc_bound_geodesic(1.0, 1, 5.0)

    @given(st.floats(0.0, 1 - 1e-9), sigmas, st.floats(0, 50), st.floats(0, 50))
    def test_non_increasing_and_in_unit_interval(self, acc, sigma, d1, d2):
        crit = bounds.critical_epsilon(1 - acc, sigma)
        lo, hi = sorted((d1, d2))
        b_lo = bounds.adv_acc_bound_geodesic(acc, sigma, crit + lo * sigma)
        b_hi = bounds.adv_acc_bound_geodesic(acc, sigma, crit + hi * sigma)
        assert 0.0 <= b_hi <= b_lo <= 1.0
        assert bounds.adv_acc_bound_geodesic(acc, sigma, crit) == acc

    @given(st.floats(1e-6, 1 - 1e-6), sigmas)
    def test_doubled_critical_tolerance_gives_error(self, acc, sigma):
        crit = bounds.critical_epsilon(1 - acc, sigma)
        expect = min(acc, 1 - acc)
        assert bounds.adv_acc_bound_geodesic(acc, sigma, 2 * crit) == pytest.approx(expect, rel=1e-9, abs=1e-15)

    @given(st.floats(0.0, 1 - 1e-9), sigmas, st.integers(1, 5000), st.floats(0, 20))
    def test_q2_matches_geodesic(self, acc, sigma, p, extra):
        eps = bounds.critical_epsilon(1 - acc, sigma) + extra
        assert bounds.adv_acc_bound_lq(acc, sigma, p, 2, eps) == bounds.adv_acc_bound_geodesic(acc, sigma, eps)

    def test_curve_uses_accuracy_below_transition(self):
        grid = [0.0, 1.0, oracles.EPS_CRIT_01, 3.0]
        curve = bounds.acc_bound_curve(0.9, 1.0, grid)
        np.testing.assert_allclose(curve, [0.9, 0.9, 0.9, oracles.ADV_BOUND_09_1_3], rtol=1e-13)


class TestDistanceBound:
    def test_examples(self):
        assert bounds.distance_bound_geodesic(1.0, 1.0) == pytest.approx(oracles.SQRT_HALF_PI, rel=1e-15)
        assert bounds.distance_bound_geodesic(E2, 1.0) == pytest.approx(2 + oracles.SQRT_HALF_PI, rel=1e-15)
        assert bounds.distance_bound_geodesic(0.1, 2.0) == pytest.approx(oracles.DIST_01_2, rel=1e-15)
        assert bounds.distance_bound_lq(E2, 1, 100, math.inf) == pytest.approx(
            (2 + oracles.SQRT_HALF_PI) / 10, rel=1e-15)
        assert bounds.distance_bound_lq(E2, 1, 7, 2) == pytest.approx(2 + oracles.SQRT_HALF_PI, rel=1e-15)
        assert bounds.distance_bound_lq(0.01, 1, 10_000, math.inf) == pytest.approx(
            oracles.DIST_001_10000_INF, rel=1e-14)

    def test_vacuous(self):
        with pytest.raises(VacuousBoundError):
            bounds.distance_bound_lq(0.0, 1, 10, 2)


def test_bound_report_fields():
    r = bounds.bound_report(0.1, 1.0, [oracles.EPS_CRIT_01 / 10, 0.5], p=100, q="inf")
    assert r.eps_crit == pytest.approx(oracles.EPS_CRIT_01 / 10)
    assert r.curve[0][1] == 0.9
    assert all(0 <= b <= 1 for _, b in r.curve)
    assert r.curve[1][1] <= r.curve[0][1]
    with pytest.raises(DomainError):
        bounds.bound_report(0.1, 1.0, q=1)


class TestSigmaConstructors:
    def test_sphere(self):
        assert bounds.sphere_t2_sigma(1, 2) == 1.0
        assert bounds.sphere_t2_sigma(1, 501) == pytest.approx(oracles.SPHERE_SIGMA_501, rel=1e-15)
        assert bounds.sphere_t2_sigma(2, 5) == 1.0
        with pytest.raises(DomainError):
            bounds.sphere_t2_sigma(1, 1)

    @given(st.floats(0.01, 100), st.integers(2, 10_000))
    def test_sphere_consistent_with_ricci(self, r, p):
        s = bounds.sphere_t2_sigma(r, p)
        assert s * s == pytest.approx(r * r / (p - 1), rel=1e-14)
        assert bounds.ricci_uniform_sigma((p - 1) / r ** 2) == pytest.approx(s, rel=1e-14)

    def test_ricci(self):
        assert bounds.ricci_uniform_sigma(1) == 1.0
        assert bounds.ricci_uniform_sigma(4) == 0.5
        assert bounds.ricci_uniform_sigma(9 / 9) == bounds.sphere_t2_sigma(3, 10)
        with pytest.raises(DomainError):
            bounds.ricci_uniform_sigma(0)

    def test_pushforward(self):
        assert bounds.pushforward_sigma(1, 0.7) == 0.7
        assert bounds.pushforward_sigma(bounds.HYPERCUBE_LIPSCHITZ, 1) == pytest.approx(oracles.INV_SQRT_2PI)
        assert bounds.pushforward_sigma(3, 0.5) == 1.5

    def test_holley_stroock(self):
        assert bounds.holley_stroock_sigma(1, 0) == 1.0
        assert bounds.holley_stroock_sigma(1, 1) == pytest.approx(math.e)
        assert bounds.holley_stroock_sigma(0.5, math.log(4)) == pytest.approx(2.0)
        with pytest.raises(DomainError):
            bounds.holley_stroock_sigma(1, -0.1)


class TestToyProblem:
    def test_basic_nfl_bound(self):
        assert bounds.basic_nfl_bound(0) == (0.0, False)
        assert bounds.basic_nfl_bound(0.03).value == pytest.approx(0.07)
        assert bounds.basic_nfl_bound(0.3).value == pytest.approx(0.7)
        assert bounds.basic_nfl_bound(0.5) == (1.0, True)

    def test_std_acc(self):
        v = bounds.toy_std_acc(101, 0.3)
        assert v.value == pytest.approx(oracles.PHI_3, rel=1e-15)
        assert v.bound == pytest.approx(1 - math.exp(-4.5), rel=1e-15)
        assert bounds.toy_std_acc(2, 1e-12).value == pytest.approx(0.5)
        v = bounds.toy_std_acc(1001, oracles.ETA_1001)
        assert v.value == pytest.approx(oracles.TOY_STD_1001, rel=1e-14)
        assert v.value >= 0.99

    def test_adv_acc(self):
        assert bounds.toy_adv_acc(101, 0.3, 0.3).value == 0.5
        v = bounds.toy_adv_acc(101, 0.3, 0.6)
        assert v.value == pytest.approx(1 - oracles.PHI_3, rel=1e-12)
        assert v.bound == pytest.approx(math.exp(-4.5), rel=1e-14)
        v = bounds.toy_adv_acc(1001, oracles.ETA_1001, 2 * oracles.ETA_1001)
        assert v.value == pytest.approx(oracles.TOY_ADV_1001, rel=1e-12)
        assert v.value <= 0.01
        with pytest.raises(BelowThresholdError):
            bounds.toy_adv_acc(101, 0.3, 0.2)

    def test_eta_for_delta(self):
        assert bounds.toy_eta_for_delta(1001, 0.01) == pytest.approx(oracles.ETA_1001, rel=1e-15)
        assert bounds.toy_eta_for_delta(1000, 0.01) == pytest.approx(oracles.TOY_ETA_DEFAULT_1000, rel=1e-15)

    def test_claimed_bounds_on_grid(self):
        gen = np.random.default_rng(3)
        for _ in range(1000):
            p = int(gen.integers(2, 5000))
            eta = float(gen.uniform(0, 1))
            eps = eta + float(gen.exponential(0.2))
            std = bounds.toy_std_acc(p, eta)
            adv = bounds.toy_adv_acc(p, eta, eps)
            assert std.value >= std.bound - 1e-15
            assert adv.value <= adv.bound + 1e-15


class TestMutualInformation:
    def test_zero(self):
        assert bounds.toy_mutual_information(0.0) == 0.0

    @pytest.mark.parametrize("eta,ref", [(0.1, oracles.MI_0p1), (1.0, oracles.MI_1), (3.0, oracles.MI_3)])
    def test_against_direct_entropy_quadrature(self, eta, ref):
        assert bounds.toy_mutual_information(eta) == pytest.approx(ref, rel=1e-9, abs=1e-12)

    def test_against_monte_carlo_entropy(self):
        """Independent route: MI = E[log f(X|Y)] - E[log f(X)] estimated by sampling."""
        gen = np.random.default_rng(4)
        eta, n = 1.0, 400_000
        y = gen.choice([-1.0, 1.0], n)
        x = eta * y + gen.standard_normal(n)
        log_cond = -0.5 * (x - eta * y) ** 2
        log_mix = -0.5 * (x * x + eta * eta) + np.logaddexp(eta * x, -eta * x) - math.log(2)
        terms = log_cond - log_mix
        half = 4 * terms.std() / math.sqrt(n)
        assert abs(bounds.toy_mutual_information(eta) - terms.mean()) < half

    def test_contained_in_zero_eta_squared(self):
        for eta in np.geomspace(0.01, 3, 50):
            mi = bounds.toy_mutual_information(float(eta))
            assert 0.0 <= mi <= eta * eta

    def test_negative_eta(self):
        with pytest.raises(DomainError):
            bounds.toy_mutual_information(-0.1)


class TestBlowupBound:
    def test_examples(self):
        assert bounds.blowup_lower_bound(1, 0.5, math.sqrt(2 * math.log(2))) == 0.0
        assert bounds.blowup_lower_bound(1, 0.5, 2.0) == pytest.approx(oracles.BLOWUP_1_05_2, rel=1e-14)
        assert bounds.blowup_lower_bound(1, 0.5, 2.0) <= std_normal_cdf(2.0)
        assert bounds.blowup_lower_bound(1, 1.0, 0.0) == 0.0

    def test_below_threshold(self):
        with pytest.raises(BelowThresholdError):
            bounds.blowup_lower_bound(1, 0.5, 1.0)

    @given(st.floats(0.01, 10), probs, probs, st.floats(0, 20), st.floats(0, 20))
    def test_monotone_in_eps_and_mass(self, c, m1, m2, e1, e2):
        lo_m, hi_m = sorted((m1, m2))
        base = bounds.blowup_threshold(c, lo_m)
        lo_e, hi_e = sorted((base + e1, base + e2))
        assume(hi_e >= lo_e)
        assert bounds.blowup_lower_bound(c, lo_m, lo_e) <= bounds.blowup_lower_bound(c, lo_m, hi_e)
        assert bounds.blowup_lower_bound(c, lo_m, lo_e) <= bounds.blowup_lower_bound(c, hi_m, lo_e)
