import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nflbounds import attacks as A
from nflbounds import bounds
from nflbounds.classifiers import (CapClassifier, ConstantClassifier, LinearClassifier, MlpClassifier,
                                   averaging_classifier, eval_error)
from nflbounds.distributions import IsotropicGaussian, DiagonalGaussian, RngStream, SphereUniform, ToyFeatureBlock
from nflbounds.scalar import lq_norm
from tests import oracles


class TestMarginDistance:
    def test_examples(self):
        h = LinearClassifier([1.0, 0.0])
        assert A.linear_margin_distance(h, [0.0, 5.0], 2) == 0.0
        assert A.linear_margin_distance(h, [3.0, 7.0], 2) == 3.0
        assert A.linear_margin_distance(LinearClassifier([1.0, 1.0]), [1.0, 1.0], math.inf) == 1.0

    def test_linf_example_by_grid_search(self):
        # smallest l_inf radius whose ball contains a point with w.x <= 0
        h = LinearClassifier([1.0, 1.0])
        best = math.inf
        for r in np.linspace(0, 2, 201):
            g = np.linspace(-r, r, 41)
            dx = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
            if np.any(h.decision(np.array([1.0, 1.0]) + dx) <= 0):
                best = r
                break
        assert best == pytest.approx(1.0)

    def test_misclassified_is_zero(self):
        h = LinearClassifier([1.0, 2.0], -10.0)
        assert A.linear_margin_distance(h, [1.0, 1.0], 1) == 0.0
        # distance to the error set of the negative label
        assert A.linear_margin_distance(h, [1.0, 1.0], 1, label=-1) == pytest.approx(7 / 2)


class TestOptimalAttack:
    def test_toy_form(self):
        h = averaging_classifier(6)
        x = np.arange(6.0)
        out = A.linear_optimal_attack(h, x, 1, 0.3)
        assert out[0] == x[0]
        np.testing.assert_allclose(out[1:] - x[1:], -0.3)
        np.testing.assert_array_equal(A.linear_optimal_attack(h, x, -1, 0.0), x)

    def test_margin_identity(self):
        g = np.random.default_rng(0)
        for _ in range(1000):
            p = int(g.integers(1, 20))
            h = LinearClassifier(g.standard_normal(p), float(g.standard_normal()))
            x = g.standard_normal(p)
            eps = float(g.uniform(0, 2))
            y = int(g.choice([-1, 1]))
            before = y * h.decision(x)
            after = y * h.decision(A.linear_optimal_attack(h, x, y, eps))
            assert after == pytest.approx(before - eps * lq_norm(h.w, 1), abs=1e-12)


class TestClosedForms:
    def test_zero_eps_is_standard_accuracy(self):
        h = LinearClassifier([1.0, -2.0], 0.5)
        cond = IsotropicGaussian([1.0, 0.0], 2.0)
        assert A.linear_robust_acc_closed_form(h, cond, 0.0, 2) == pytest.approx(
            float(bounds.std_normal_cdf(1.5 / (2 * math.sqrt(5)))), rel=1e-15)
        assert A.linear_robust_acc_closed_form(h, cond, 1e6, 2) == 0.0

    def test_toy_two_routes(self):
        eta = 0.095950
        direct = A.linear_robust_acc_closed_form(averaging_classifier(1001), ToyFeatureBlock(1001, eta), 2 * eta, math.inf)
        assert direct == pytest.approx(bounds.toy_adv_acc(1001, eta, 2 * eta).value, abs=1e-12)
        exact_eta = oracles.ETA_1001
        at_exact = A.linear_robust_acc_closed_form(averaging_classifier(1001), ToyFeatureBlock(1001, exact_eta),
                                                   2 * exact_eta, math.inf)
        assert at_exact == pytest.approx(oracles.TOY_ADV_1001, rel=1e-12)
        neg = A.linear_robust_acc_closed_form(averaging_classifier(1001), ToyFeatureBlock(1001, eta, y=-1), 2 * eta,
                                              math.inf)
        assert neg == pytest.approx(direct, abs=1e-15)

    def test_kind_mismatch(self):
        with pytest.raises(TypeError):
            A.linear_robust_acc_closed_form(LinearClassifier([1.0, 1.0]), SphereUniform(1.0, 2), 0.1, 2)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 3), st.floats(0, 3), st.sampled_from([1, 2, math.inf]))
    def test_non_increasing(self, e1, e2, q):
        h = LinearClassifier([0.5, -1.0, 2.0], 0.2)
        cond = DiagonalGaussian([0.3, 0.1, 0.5], [1.0, 0.5, 0.2])
        lo, hi = sorted((e1, e2))
        assert A.linear_robust_acc_closed_form(h, cond, hi, q) <= A.linear_robust_acc_closed_form(h, cond, lo, q)

    def test_distance_at_zero_margin(self):
        h = LinearClassifier([1.0, 0.0])
        assert A.linear_mean_distance_closed_form(h, IsotropicGaussian([0.0, 3.0], 1.0), 2) == pytest.approx(
            oracles.INV_SQRT_2PI, rel=1e-15)


class TestEmpirical:
    def test_mc_matches_closed_form(self):
        g = np.random.default_rng(1)
        hits = 0
        for i in range(10):
            p = int(g.integers(2, 30))
            h = LinearClassifier(g.standard_normal(p), float(g.standard_normal()))
            cond = DiagonalGaussian(g.standard_normal(p), g.uniform(0.2, 1.5, p), label=1)
            q = [1, 2, math.inf][i % 3]
            eps = float(g.uniform(0, 0.5))
            acc, (lo, hi) = A.empirical_adv_accuracy(h, cond, 1, A.ThreatModel(eps, q), 100_000, RngStream(i))
            exact = A.linear_robust_acc_closed_form(h, cond, eps, q)
            hits += lo <= exact <= hi
            assert abs(acc - exact) < 5 * math.sqrt(max(exact * (1 - exact), 1e-6) / 100_000)
        assert hits >= 8

    def test_zero_eps_matches_eval_error(self):
        h = LinearClassifier([1.0, 1.0], -0.5)
        cond = IsotropicGaussian([0.5, 0.5], 1.0)
        acc, _ = A.empirical_adv_accuracy(h, cond, 1, A.ThreatModel(0.0), 5000, RngStream(3))
        err, _ = eval_error(h, cond, 1, 5000, RngStream(3))
        assert acc == 1 - err

    def test_constant_classifier_is_always_robust(self):
        cond = IsotropicGaussian(np.zeros(3), 1.0, label=2)
        acc, _ = A.empirical_adv_accuracy(ConstantClassifier(2, 3), cond, 2, A.ThreatModel(100.0), 100, RngStream(0))
        assert acc == 1.0

    def test_distance_mc(self):
        h = LinearClassifier([1.0, -1.0], 0.3)
        cond = IsotropicGaussian([0.5, 0.0], 0.8)
        for q in (1, 2, math.inf):
            est = A.empirical_distance_to_error(h, cond, 1, q, 200_000, RngStream(4))
            assert est.ci[0] <= A.linear_mean_distance_closed_form(h, cond, q) <= est.ci[1]
            assert not est.upper_estimate and est.censored == 0

    def test_hemisphere_geodesic_distance(self):
        h = CapClassifier([0, 0, 1.0], 0.0, cap_label=1, rest_label=0)
        est = A.empirical_distance_to_error(h, SphereUniform(1.0, 3), 1, 2, 1_000_000, RngStream(5))
        # polar angle density on S^2 is sin(theta)/2
        oracle = integrate.quad(lambda t: (math.pi / 2 - t) * math.sin(t) / 2, 0, math.pi / 2)[0]
        assert oracle == pytest.approx((math.pi / 2 - 1) / 2, rel=1e-12)
        assert est.ci[0] <= oracle <= est.ci[1]

    def test_threat_model_validation(self):
        with pytest.raises(ValueError):
            A.ThreatModel(-0.1)
        t = A.ThreatModel(0.5, radius=2.0)
        assert t.geodesic and t.q is None


class TestGeodesic:
    def test_examples(self):
        x = np.array([1.0, 0, 0])
        assert A.geodesic_distance_sphere(x, x, 1.0) == 0.0
        assert A.geodesic_distance_sphere(x, -x, 1.0) == pytest.approx(math.pi)
        with pytest.raises(ValueError):
            A.geodesic_distance_sphere(x, 2 * x, 1.0)

    def test_at_least_euclidean(self):
        g = np.random.default_rng(0)
        for r in (0.5, 3.0):
            x = g.standard_normal((10_000, 4))
            x2 = g.standard_normal((10_000, 4))
            x = r * x / np.linalg.norm(x, axis=1, keepdims=True)
            x2 = r * x2 / np.linalg.norm(x2, axis=1, keepdims=True)
            assert np.all(A.geodesic_distance_sphere(x, x2, r) >= np.linalg.norm(x - x2, axis=1) - 1e-12)


def _net(seed=0, p=5):
    g = np.random.default_rng(seed)
    h = MlpClassifier.init([p, 16, 3], g)
    for b in h.biases:
        b += 0.1 * g.standard_normal(b.shape)
    return h


class TestPgd:
    def test_zero_eps(self):
        h = _net()
        x = np.random.default_rng(1).standard_normal((200, 5))
        y = np.random.default_rng(2).integers(0, 3, 200)
        found, x_adv = A.pgd_linf(h, x, y, 0.0)
        np.testing.assert_array_equal(found, h.predict(x) != y)
        np.testing.assert_array_equal(x_adv, x)

    def test_one_step_linear_matches_optimal_attack(self):
        g = np.random.default_rng(3)
        for _ in range(50):
            p = int(g.integers(1, 10))
            h = LinearClassifier(g.standard_normal(p), float(g.standard_normal()))
            x = g.standard_normal((40, p))
            y = g.choice([-1, 1], 40)
            eps = float(g.uniform(0.01, 1))
            found, _ = A.pgd_linf(h, x, y, eps, steps=1, step_size=eps)
            opt = np.array([h.predict(A.linear_optimal_attack(h, xi, yi, eps)) != yi for xi, yi in zip(x, y)])
            np.testing.assert_array_equal(found, opt)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000), st.floats(0.0, 2.0), st.integers(0, 2))
    def test_projection(self, seed, eps, restarts):
        h = _net(seed)
        x = np.random.default_rng(seed).standard_normal((30, 5))
        y = np.full(30, 1)
        found, x_adv = A.pgd_linf(h, x, y, eps, steps=5, rng=RngStream(seed), restarts=restarts)
        assert np.all(lq_norm(x_adv - x, math.inf, axis=1) <= eps + 1e-12)
        np.testing.assert_array_equal(found, h.predict(x_adv) != y)

    def test_box_clamp(self):
        h = _net(p=4)
        x = np.random.default_rng(0).uniform(0, 1, (50, 4))
        _, x_adv = A.pgd_linf(h, x, np.zeros(50, int), 0.5, steps=5, box=(0.0, 1.0))
        assert x_adv.min() >= 0 and x_adv.max() <= 1

    def test_errors(self):
        h = _net()
        with pytest.raises(ValueError):
            A.pgd_linf(h, np.zeros((1, 5)), [0], 0.1, steps=0)
        with pytest.raises(ValueError):
            A.pgd_linf(h, np.zeros((1, 5)), [0], -0.1)
        with pytest.raises(ValueError):
            A.pgd_linf(h, np.zeros((1, 5)), [0], 0.1, restarts=1)

    def test_non_finite_gradient(self):
        h = _net()
        h.weights[0][0, 0] = np.nan
        with pytest.raises(FloatingPointError, match="non-finite"):
            A.pgd_linf(h, np.ones((3, 5)), [0, 1, 2], 0.1)

    def test_restart_noise_is_keyed_by_sample_index(self):
        h = _net(4)
        x = np.random.default_rng(4).standard_normal((20, 5))
        y = np.zeros(20, int)
        full, xa = A.pgd_linf(h, x, y, 0.3, steps=3, rng=RngStream(1), restarts=1)
        part, xb = A.pgd_linf(h, x[10:], y[10:], 0.3, steps=3, rng=RngStream(1), restarts=1,
                              sample_index=np.arange(10, 20))
        np.testing.assert_array_equal(full[10:], part)
        np.testing.assert_array_equal(xa[10:], xb)


class TestCurve:
    def test_exact_linear_curve(self):
        h = LinearClassifier([1.0, 1.0], 0.0, positive_label=1, negative_label=0)
        cond = IsotropicGaussian([1.0, 1.0], 1.0)
        grid = np.linspace(0, 3, 13)
        c = A.robustness_curve(h, cond, 1, grid, 20_000, RngStream(0), q=2)
        assert c.exact and c.label == 1
        assert np.all(np.diff(c.acc) <= 0)
        for pt in c.points:
            exact = A.linear_robust_acc_closed_form(h, cond, pt.epsilon, 2)
            assert abs(pt.acc_hat - exact) < 5 * math.sqrt(0.25 / 20_000)
        assert c.to_csv().splitlines()[0] == A.RobustnessCurve.HEADER
        assert len(c.to_csv().splitlines()) == 14

    def test_pgd_curve_monotone(self):
        h = _net(1)
        cond = IsotropicGaussian(np.zeros(5), 1.0, label=0)
        c = A.robustness_curve(h, cond, 0, np.linspace(0, 1, 8), 500, RngStream(1), attack=A.PgdConfig(steps=5))
        assert not c.exact
        assert np.all(np.diff(c.acc) <= 0)
        assert c.points[0].acc_hat == pytest.approx(1 - c.err_std)

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            A.robustness_curve_from_samples(_net(), np.zeros((3, 5)), 0, [0.1, 0.1], 1.0)

    def test_pooled_labels_without_sigma(self):
        h = _net(2)
        x = np.random.default_rng(0).standard_normal((100, 5))
        labels = h.predict(x)
        c = A.robustness_curve_from_samples(h, x, labels, [0.0, 0.5], None, attack=A.PgdConfig(steps=3))
        assert c.points[0].acc_hat == 1.0 and c.label is None
        assert math.isnan(c.eps_crit) and math.isnan(c.points[1].bound)

    def test_bisection_distance_is_upper_estimate(self):
        h = _net(3)
        cond = IsotropicGaussian(np.zeros(5), 1.0, label=0)
        est = A.empirical_distance_to_error(h, cond, 0, math.inf, 100, RngStream(2), eps_max=5.0,
                                            attack=A.PgdConfig(steps=10))
        assert est.upper_estimate
        d = est.distances
        assert np.all((d >= 0) & (d <= 5.0))
        with pytest.raises(ValueError):
            A.empirical_distance_to_error(h, cond, 0, math.inf, 10, RngStream(2))
