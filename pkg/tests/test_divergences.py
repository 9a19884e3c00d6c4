import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from vibench.divergences import (
    CHI_SQ,
    EXCLUSIVE_KL,
    INCLUSIVE_KL,
    TAIL_ADAPTIVE,
    NotPositiveDefinite,
    WeightSet,
    alpha_divergence,
    analytic_divergence,
    f_eval,
    gaussian_kl,
    gaussian_power_integral,
    get_divergence,
    mc_loss,
)

POINTWISE = [EXCLUSIVE_KL, INCLUSIVE_KL, CHI_SQ, alpha_divergence(0.5), alpha_divergence(2.5)]


class TestFEval:
    @pytest.mark.parametrize("spec", POINTWISE, ids=lambda s: f"{s.name}{s.alpha or ''}")
    def test_f_of_one_is_zero(self, spec):
        assert f_eval(spec, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_chi_sq_at_two(self):
        assert f_eval(CHI_SQ, np.log(2.0)) == pytest.approx(1.0)

    def test_alpha_half_at_four(self):
        assert f_eval(alpha_divergence(0.5), np.log(4.0)) == pytest.approx(8.0)

    @pytest.mark.parametrize("spec", POINTWISE, ids=lambda s: f"{s.name}{s.alpha or ''}")
    def test_convex_on_grid(self, spec):
        w = np.logspace(-3, 3, 301)
        vals = spec.f_of_logw(np.log(w))
        # convexity in w via second differences on the (nonuniform) grid
        for i in range(1, len(w) - 1):
            chord = vals[i - 1] + (vals[i + 1] - vals[i - 1]) * (
                (w[i] - w[i - 1]) / (w[i + 1] - w[i - 1])
            )
            assert vals[i] <= chord + 1e-8 * max(1.0, abs(chord))

    @pytest.mark.parametrize("spec", POINTWISE, ids=lambda s: f"{s.name}{s.alpha or ''}")
    def test_fprime_matches_difference(self, spec):
        for logw in (-2.0, -0.5, 0.0, 0.7, 2.0):
            w = np.exp(logw)
            h = 1e-6 * max(w, 1e-3)
            fd = (f_eval(spec, np.log(w + h)) - f_eval(spec, np.log(w - h))) / (2 * h)
            assert spec.fprime_of_logw(logw) == pytest.approx(fd, rel=1e-4)

    def test_tail_adaptive_has_no_f(self):
        with pytest.raises(ValueError):
            f_eval(TAIL_ADAPTIVE, 0.0)

    def test_overflow_saturates(self):
        assert f_eval(CHI_SQ, 500.0) == np.inf

    def test_get_divergence_names(self):
        assert get_divergence("exclusive_kl") is EXCLUSIVE_KL
        assert get_divergence("alpha_0.5").alpha == 0.5
        with pytest.raises(ValueError):
            get_divergence("nope")


class TestWeightSet:
    def test_rejects_pos_inf_and_nan(self):
        with pytest.raises(ValueError):
            WeightSet(np.array([0.0, np.inf]))
        with pytest.raises(ValueError):
            WeightSet(np.array([0.0, np.nan]))

    def test_normalized_sums_to_one(self, rng):
        ws = WeightSet(rng.normal(size=100))
        assert np.sum(ws.normalized()) == pytest.approx(1.0)

    def test_all_neg_inf_rejected_on_use(self):
        ws = WeightSet(np.full(4, -np.inf))
        with pytest.raises(ValueError):
            ws.normalized()


class TestMcLoss:
    @pytest.mark.parametrize("spec", POINTWISE, ids=lambda s: f"{s.name}{s.alpha or ''}")
    def test_equal_weights_zero(self, spec):
        ws = WeightSet(np.zeros(50))
        assert mc_loss(spec, ws).value == pytest.approx(0.0, abs=1e-12)

    def test_exclusive_mean(self):
        ws = WeightSet(np.array([-1.0, 1.0]))
        assert mc_loss(EXCLUSIVE_KL, ws).value == pytest.approx(0.0)

    def test_singleton_plain(self):
        ws = WeightSet(np.array([0.4]))
        assert mc_loss(EXCLUSIVE_KL, ws).value == pytest.approx(f_eval(EXCLUSIVE_KL, 0.4))
        assert mc_loss(CHI_SQ, ws, self_normalize=False).value == pytest.approx(
            f_eval(CHI_SQ, 0.4)
        )

    def test_inclusive_self_normalized_form(self, rng):
        log_w = rng.normal(size=200)
        ws = WeightSet(log_w)
        wbar = ws.normalized()
        assert mc_loss(INCLUSIVE_KL, ws).value == pytest.approx(np.sum(wbar * log_w))

    def test_overflow_counted(self):
        ws = WeightSet(np.array([0.0, 0.0, 400.0]))
        est = mc_loss(CHI_SQ, ws, self_normalize=False)
        assert est.overflow_count == 1
        assert np.isfinite(est.value)

    def test_jensen_sample_property(self, rng):
        # exp(-L_exclusive) <= mean(w): arithmetic-geometric mean inequality
        for _ in range(20):
            log_w = rng.normal(scale=2.0, size=64)
            ws = WeightSet(log_w)
            lhs = np.exp(-mc_loss(EXCLUSIVE_KL, ws).value)
            rhs = np.mean(np.exp(log_w))
            assert lhs <= rhs * (1 + 1e-12)


class TestGaussianKL:
    def test_identical_is_zero(self, rng):
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        mean = rng.normal(size=2)
        for d in ("exclusive", "inclusive"):
            assert gaussian_kl(mean, cov, mean, cov, d) == pytest.approx(0.0, abs=1e-12)

    def test_1d_closed_form(self):
        got = gaussian_kl(np.zeros(1), np.eye(1), np.zeros(1), 4 * np.eye(1), "exclusive")
        assert got == pytest.approx(np.log(2) + 1 / 8 - 1 / 2, abs=1e-12)

    def test_2d_derived_value(self):
        cov_p = np.array([[1.0, 0.5], [0.5, 1.0]])
        got = gaussian_kl(np.zeros(2), np.eye(2), np.zeros(2), cov_p, "exclusive")
        assert got == pytest.approx(0.5 * (8 / 3 - 2 + np.log(0.75)), abs=1e-12)

    def test_direction_labels(self):
        q_cov, p_cov = np.eye(1), 4 * np.eye(1)
        excl = gaussian_kl(np.zeros(1), q_cov, np.zeros(1), p_cov, "exclusive")
        incl = gaussian_kl(np.zeros(1), q_cov, np.zeros(1), p_cov, "inclusive")
        assert excl != incl
        # inclusive(q,p) must equal exclusive with the roles swapped
        swapped = gaussian_kl(np.zeros(1), p_cov, np.zeros(1), q_cov, "exclusive")
        assert incl == pytest.approx(swapped)


class TestGaussianPowerIntegral:
    def test_endpoints_vanish(self, rng):
        cov_p = np.array([[1.5, 0.2], [0.2, 0.8]])
        cov_q = np.eye(2) * 2.0
        mp, mq = rng.normal(size=2), rng.normal(size=2)
        assert gaussian_power_integral(0.0, mp, cov_p, mq, cov_q) == pytest.approx(0.0, abs=1e-10)
        assert gaussian_power_integral(1.0, mp, cov_p, mq, cov_q) == pytest.approx(0.0, abs=1e-10)

    def test_second_moment_1d(self):
        val = gaussian_power_integral(2.0, np.zeros(1), np.eye(1), np.zeros(1), 4 * np.eye(1))
        assert np.exp(val) == pytest.approx(4 / np.sqrt(7), rel=1e-10)

    def test_quadrature_oracle_1d(self):
        # E_q[w^t] = integral p^t q^(1-t) checked by numerical integration
        p = norm(0.3, 1.0)
        q = norm(0.0, 2.0)
        for t in (0.5, 1.5, 2.0):
            val = gaussian_power_integral(
                t, np.array([0.3]), np.eye(1), np.zeros(1), 4 * np.eye(1)
            )
            oracle, _ = quad(lambda x: p.pdf(x) ** t * q.pdf(x) ** (1 - t), -40, 40)
            assert val == pytest.approx(np.log(oracle), abs=1e-7)

    def test_log_convex_in_t(self):
        cov_p = np.array([[1.0, 0.5], [0.5, 1.0]])
        ts = np.linspace(0.0, 2.0, 21)
        vals = [
            gaussian_power_integral(t, np.zeros(2), cov_p, np.zeros(2), np.eye(2))
            for t in ts
        ]
        second = np.diff(vals, 2)
        assert np.all(second >= -1e-8)

    def test_pd_failure_means_infinite_divergence(self):
        # q much narrower than p: E_q[w^2] diverges
        spec = CHI_SQ
        val = analytic_divergence(spec, np.zeros(1), 4 * np.eye(1), np.zeros(1), 0.25 * np.eye(1))
        assert val == np.inf
        with pytest.raises(NotPositiveDefinite):
            gaussian_power_integral(2.0, np.zeros(1), 4 * np.eye(1), np.zeros(1), 0.25 * np.eye(1))

    def test_all_divergences_zero_at_equality(self):
        cov = np.array([[1.0, 0.4], [0.4, 2.0]])
        mean = np.array([0.3, -0.7])
        for spec in POINTWISE:
            assert analytic_divergence(spec, mean, cov, mean, cov) == pytest.approx(0.0, abs=1e-9)


class TestMcAgainstAnalytic:
    def test_exclusive_zero_at_equality(self, rng):
        # q = p exactly: the exclusive loss estimate is 0 within MC error
        from vibench.families import MeanFieldGaussian
        from vibench.numkit import CovarianceSpec
        from vibench.targets import make_correlated_gaussian

        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.0, dim=3))
        fam = MeanFieldGaussian(3)
        draws = fam.draw_base(5, 2000)
        thetas, logq = fam.transform(np.zeros(6), draws.eps)
        ws = WeightSet(target.log_joint(thetas) - logq)
        assert abs(mc_loss(EXCLUSIVE_KL, ws).value) < 1e-10
