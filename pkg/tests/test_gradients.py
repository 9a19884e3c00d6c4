import numpy as np
import pytest
from numpy.testing import assert_allclose

from vibench.divergences import CHI_SQ, EXCLUSIVE_KL, INCLUSIVE_KL, alpha_divergence
from vibench.families import BaseDraws, MeanFieldGaussian, PlanarFlow, UnsupportedOperation, make_family
from vibench.gradients import (
    entropy_form_rp_gradient,
    expectation_rp_gradient,
    expectation_score_gradient,
    rp_gradient,
    score_gradient,
    tail_adaptive_gradient,
)
from vibench.numkit import CovarianceSpec
from vibench.optimize import mean_field_gaussian_objective
from vibench.targets import make_correlated_gaussian

STD_NORMAL_1D = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.0, dim=1))


def dyadic_log_weights(rng, n):
    """Log weights on a 1/8 grid so adding dyadic constants is float-exact."""
    return rng.integers(-40, 8, size=n) / 8.0


class TestScoreGradient:
    def test_equal_weights_inclusive_is_mean_score(self, rng):
        fam = MeanFieldGaussian(2)
        values = np.zeros(4)
        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.0, dim=2))
        draws = fam.draw_base(3, 500)
        est = score_gradient(INCLUSIVE_KL, fam, values, target, draws)
        thetas, _ = fam.transform(values, draws.eps)
        expected = -np.mean(fam.score_grad_logq(values, thetas), axis=0)
        assert_allclose(est.grad, expected, atol=1e-12)

    def test_dominant_weight_limit(self):
        # one overwhelming weight: the self-normalized gradient collapses to
        # minus the score at that draw
        fam = MeanFieldGaussian(1)
        values = np.array([0.0, 0.0])

        class Spiky:
            dim = 1
            name = "spiky"

            @staticmethod
            def log_joint(thetas):
                thetas = np.atleast_2d(thetas)
                out = np.where(np.abs(thetas[:, 0] - 1.0) < 1e-3, 200.0, 0.0)
                return out

            @staticmethod
            def grad_log_joint(theta):
                return np.zeros_like(theta)

        eps = np.array([[1.0], [0.1], [-0.5], [0.3]])
        est = score_gradient(INCLUSIVE_KL, fam, values, Spiky, BaseDraws(eps=eps))
        slq = fam.score_grad_logq(values, np.array([[1.0]]))[0]
        assert_allclose(est.grad, -slq, atol=1e-12)

    def test_unsupported_family(self):
        fam = PlanarFlow(2)
        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.0, dim=2))
        with pytest.raises(UnsupportedOperation):
            score_gradient(INCLUSIVE_KL, fam, fam.init_values(), target, fam.draw_base(0, 16))

    def test_scale_invariance_of_normalized_weights(self, rng):
        # the self-normalization canonicalizes by max subtraction, so a common
        # dyadic shift of the log weights cancels bit-exactly
        from vibench.divergences import WeightSet

        log_w = dyadic_log_weights(rng, 256)
        a = WeightSet(log_w).normalized()
        b = WeightSet(log_w + 3.25).normalized()
        assert np.array_equal(a, b)

    def test_scale_invariance_through_target(self, rng):
        # through a shifted target the per-draw float additions each round, so
        # the self-normalized score gradient agrees to within a few ulps
        fam = MeanFieldGaussian(2)
        values = rng.normal(size=4) * 0.3
        draws = fam.draw_base(11, 256)

        class Shifted:
            dim = 2

            def log_joint(self, thetas):
                return base.log_joint(thetas) + 3.25

            def grad_log_joint(self, theta):
                return base.grad_log_joint(theta)

        base = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.3, dim=2))
        a = score_gradient(INCLUSIVE_KL, fam, values, base, draws)
        b = score_gradient(INCLUSIVE_KL, fam, values, Shifted(), draws)
        assert_allclose(a.grad, b.grad, rtol=1e-12, atol=1e-14)


class TestRpGradient:
    def test_matches_closed_form_exclusive(self, rng):
        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.5, dim=2))
        fam = MeanFieldGaussian(2)
        _, jac = mean_field_gaussian_objective(EXCLUSIVE_KL, target.truth.mean, target.truth.cov)
        for i in range(10):
            values = rng.normal(size=4) * 0.4
            draws = fam.draw_base(100 + i, 200_000)
            est = rp_gradient(EXCLUSIVE_KL, fam, values, target, draws)
            se = np.sqrt(est.per_coordinate_variance / est.size)
            assert np.all(np.abs(est.grad - jac(values)) < 5 * se + 1e-4)

    def test_zero_at_optimum_within_4se(self):
        target = STD_NORMAL_1D
        fam = MeanFieldGaussian(1)
        draws = fam.draw_base(42, 50_000)
        est = rp_gradient(EXCLUSIVE_KL, fam, np.zeros(2), target, draws)
        se = np.sqrt(est.per_coordinate_variance / est.size)
        assert np.all(np.abs(est.grad) <= 4 * se)

    def test_exclusive_shift_invariant_bitwise(self, rng):
        fam = MeanFieldGaussian(2)
        values = rng.normal(size=4) * 0.3
        draws = fam.draw_base(17, 64)
        base = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.3, dim=2))

        class Shifted:
            dim = 2

            def log_joint(self, thetas):
                return base.log_joint(thetas) + 11.5

            def grad_log_joint(self, theta):
                return base.grad_log_joint(theta)

        a = rp_gradient(EXCLUSIVE_KL, fam, values, base, draws)
        b = rp_gradient(EXCLUSIVE_KL, fam, values, Shifted(), draws)
        assert np.array_equal(a.grad, b.grad)

    def test_chi_sq_overflow_reported(self):
        fam = MeanFieldGaussian(1)

        class Hot:
            dim = 1

            @staticmethod
            def log_joint(thetas):
                return np.full(np.atleast_2d(thetas).shape[0], 400.0)

            @staticmethod
            def grad_log_joint(theta):
                return np.zeros_like(theta)

        est = rp_gradient(CHI_SQ, fam, np.zeros(2), Hot, fam.draw_base(1, 32))
        assert est.failed
        assert est.overflow_count == 32

    def test_consistency_score_vs_rp(self, rng):
        # same expectation for exclusive KL on a 1-D Gaussian target
        fam = MeanFieldGaussian(1)
        values = np.array([0.5, np.log(0.8)])
        draws = fam.draw_base(7, 100_000)
        es = score_gradient(EXCLUSIVE_KL, fam, values, STD_NORMAL_1D, draws)
        er = rp_gradient(EXCLUSIVE_KL, fam, values, STD_NORMAL_1D, draws)
        combined = np.sqrt(es.per_coordinate_variance / es.size) + np.sqrt(
            er.per_coordinate_variance / er.size
        )
        assert np.all(np.abs(es.grad - er.grad) <= 4 * combined)


class TestEntropyForm:
    def test_matches_rp_in_expectation(self):
        fam = MeanFieldGaussian(1)
        values = np.array([0.4, np.log(1.3)])
        draws = fam.draw_base(23, 100_000)
        ee = entropy_form_rp_gradient(fam, values, STD_NORMAL_1D, draws)
        er = rp_gradient(EXCLUSIVE_KL, fam, values, STD_NORMAL_1D, draws)
        combined = np.sqrt(ee.per_coordinate_variance / ee.size) + np.sqrt(
            er.per_coordinate_variance / er.size
        )
        assert np.all(np.abs(ee.grad - er.grad) <= 4 * combined + 1e-12)

    def test_zero_at_conjugate_optimum(self):
        fam = MeanFieldGaussian(1)
        draws = fam.draw_base(29, 50_000)
        est = entropy_form_rp_gradient(fam, np.zeros(2), STD_NORMAL_1D, draws)
        se = np.sqrt(est.per_coordinate_variance / est.size) + 1e-12
        assert np.all(np.abs(est.grad) <= 4 * se)

    def test_entropy_grad_block_exact(self):
        fam = MeanFieldGaussian(3)
        g = fam.entropy_grad(np.zeros(6))
        assert_allclose(g, np.concatenate([np.zeros(3), np.ones(3)]))

    def test_flow_rejected(self):
        fam = PlanarFlow(2)
        with pytest.raises(UnsupportedOperation):
            entropy_form_rp_gradient(fam, fam.init_values(), STD_NORMAL_1D, fam.draw_base(0, 8))


class TestTailAdaptive:
    def _target(self):
        return make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.3, dim=2))

    def test_rank_weights_s2(self):
        # with w1 < w2 the normalized rank weights are (1/3, 2/3)
        from scipy.stats import rankdata

        log_w = np.array([-1.0, 2.0])
        ranks = rankdata(log_w, method="average")
        weights = ranks / ranks.sum()
        assert_allclose(weights, [1 / 3, 2 / 3])

    def test_equal_weights_uniform(self, rng):
        fam = MeanFieldGaussian(2)
        values = np.zeros(4)
        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.0, dim=2))
        draws = fam.draw_base(2, 64)
        est = tail_adaptive_gradient(fam, values, target, draws)
        # q = p: every weight ties, rank weights collapse to 1/S, and the
        # estimate equals the plain average of grad log w
        grad_log_w = fam.pullback(values, draws.eps, target.grad_log_joint(
            fam.transform(values, draws.eps)[0]), 1.0)
        assert_allclose(est.grad, -grad_log_w.mean(axis=0), atol=1e-12)

    def test_scale_invariance_bit_identical(self, rng):
        fam = MeanFieldGaussian(2)
        values = rng.normal(size=4) * 0.2
        draws = fam.draw_base(5, 128)
        base = self._target()

        class Shifted:
            dim = 2

            def log_joint(self, thetas):
                return base.log_joint(thetas) + 123.0

            def grad_log_joint(self, theta):
                return base.grad_log_joint(theta)

        a = tail_adaptive_gradient(fam, values, base, draws)
        b = tail_adaptive_gradient(fam, values, Shifted(), draws)
        assert np.array_equal(a.grad, b.grad)

    def test_needs_two_draws(self):
        fam = MeanFieldGaussian(2)
        with pytest.raises(ValueError):
            tail_adaptive_gradient(fam, np.zeros(4), self._target(), fam.draw_base(0, 1))


class TestAppendixOracles:
    def test_rp_variance_quadratic_cost(self):
        # cost theta^2 with q = N(mu, 1): single-draw RP mu-gradient 2(mu+eps)
        fam = MeanFieldGaussian(1)
        rng = np.random.default_rng(8)
        eps = rng.standard_normal((100_000, 1))
        mu = 0.3
        est = expectation_rp_gradient(fam, np.array([mu, 0.0]), eps, 2.0 * (mu + eps))
        assert est.per_coordinate_variance[0] == pytest.approx(4.0, abs=0.1)

    def test_score_variance_quadratic_cost(self):
        # single-draw score term theta^2 (theta - mu): variance mu^4+14mu^2+15
        fam = MeanFieldGaussian(1)
        rng = np.random.default_rng(9)
        for mu, expect, tol in ((0.0, 15.0, 1.0), (1.0, 30.0, 3.0)):
            thetas = mu + rng.standard_normal((1_000_000, 1))
            est = expectation_score_gradient(fam, np.array([mu, 0.0]), thetas, thetas[:, 0] ** 2)
            assert est.per_coordinate_variance[0] == pytest.approx(expect, abs=tol)


class TestVarianceBookkeeping:
    def test_variances_nonnegative_and_shapes(self, rng):
        fam = make_family("nvp_flow", 4)
        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.5, dim=4))
        values = fam.init_values(np.random.default_rng(0))
        draws = fam.draw_base(3, 64)
        for est in (
            rp_gradient(EXCLUSIVE_KL, fam, values, target, draws),
            score_gradient(INCLUSIVE_KL, fam, values, target, draws),
            tail_adaptive_gradient(fam, values, target, draws),
        ):
            assert est.grad.shape == (fam.param_count,)
            assert est.per_coordinate_variance.shape == (fam.param_count,)
            assert np.all(est.per_coordinate_variance >= 0)
            assert est.size == 64
