import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import gammaln

from vibench.numkit import (
    CholeskyFactor,
    CovarianceSpec,
    CovKind,
    build_covariance,
    log_sum_exp,
    mvn_logpdf,
    student_t_logpdf,
)


class TestBuildCovariance:
    def test_uniform_d2(self):
        cov = build_covariance(CovarianceSpec(kind="uniform", rho=0.5, dim=2))
        assert_allclose(cov, [[1, 0.5], [0.5, 1]])

    def test_banded_d3(self):
        cov = build_covariance(CovarianceSpec(kind="banded", rho=0.5, dim=3))
        assert_allclose(cov, [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])

    @pytest.mark.parametrize("kind", ["uniform", "banded"])
    def test_rho_zero_is_identity(self, kind):
        cov = build_covariance(CovarianceSpec(kind=kind, rho=0.0, dim=4))
        assert_allclose(cov, np.eye(4))

    def test_invalid_rho_rejected(self):
        with pytest.raises(ValueError):
            CovarianceSpec(kind="uniform", rho=1.0, dim=3)

    def test_non_pd_uniform_rejected(self):
        # uniform correlation needs rho > -1/(D-1)
        with pytest.raises(ValueError):
            build_covariance(CovarianceSpec(kind="uniform", rho=-0.9, dim=5))

    @pytest.mark.parametrize("kind", [CovKind.UNIFORM, CovKind.BANDED])
    @pytest.mark.parametrize("dim", [1, 3, 10, 100])
    def test_cholesky_reconstruction(self, kind, dim):
        cov = build_covariance(CovarianceSpec(kind=kind, rho=0.5, dim=dim))
        f = CholeskyFactor.from_cov(cov)
        assert np.max(np.abs(f.L @ f.L.T - cov)) < 1e-10
        sign, logdet = np.linalg.slogdet(cov)
        assert sign > 0
        assert abs(f.log_det - logdet) < 1e-10


class TestMvnLogpdf:
    def test_standard_normal_1d(self):
        chol = CholeskyFactor.from_cov(np.eye(1))
        assert mvn_logpdf(np.zeros(1), np.zeros(1), chol) == pytest.approx(-0.9189385, abs=1e-6)

    def test_standard_normal_2d(self):
        chol = CholeskyFactor.from_cov(np.eye(2))
        assert mvn_logpdf(np.zeros(2), np.zeros(2), chol) == pytest.approx(-1.8378771, abs=1e-6)

    def test_reflection_symmetry(self, rng):
        cov = build_covariance(CovarianceSpec(kind="uniform", rho=0.3, dim=4))
        chol = CholeskyFactor.from_cov(cov)
        mean = rng.normal(size=4)
        for _ in range(5):
            theta = rng.normal(size=4)
            assert mvn_logpdf(theta, mean, chol) == pytest.approx(
                mvn_logpdf(2 * mean - theta, mean, chol), rel=1e-12
            )

    def test_integrates_to_one_1d(self):
        chol = CholeskyFactor.from_cov(np.array([[2.3]]))
        grid = np.linspace(-20, 20, 20001)[:, None]
        vals = np.exp(mvn_logpdf(grid, np.array([0.4]), chol))
        total = np.trapezoid(vals, grid[:, 0])
        assert abs(total - 1.0) < 1e-4

    def test_dimension_mismatch(self):
        chol = CholeskyFactor.from_cov(np.eye(2))
        with pytest.raises(ValueError):
            mvn_logpdf(np.zeros(3), np.zeros(2), chol)


class TestStudentT:
    def test_t10_at_zero(self):
        # log Gamma(5.5) - log Gamma(5) - 0.5 log(10 pi), evaluated independently
        expected = gammaln(5.5) - gammaln(5.0) - 0.5 * np.log(10 * np.pi)
        assert student_t_logpdf(0.0, 10.0) == pytest.approx(expected, abs=1e-12)

    def test_location_scale_identity(self, rng):
        for _ in range(5):
            nu = rng.uniform(1, 30)
            scale = rng.uniform(0.1, 5)
            loc = rng.normal()
            lhs = student_t_logpdf(loc, nu, loc, scale)
            rhs = student_t_logpdf(0.0, nu, 0.0, 1.0) - np.log(scale)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_gaussian_limit(self):
        assert student_t_logpdf(0.0, 1e6) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-3)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            student_t_logpdf(0.0, -1.0)
        with pytest.raises(ValueError):
            student_t_logpdf(0.0, 10.0, 0.0, 0.0)


class TestLogSumExp:
    def test_pair_of_zeros(self):
        assert log_sum_exp(np.zeros(2)) == pytest.approx(np.log(2))

    def test_singleton(self):
        assert log_sum_exp(np.array([3.7])) == pytest.approx(3.7)

    def test_no_overflow(self):
        assert log_sum_exp(np.array([1000.0, 1000.0])) == pytest.approx(1000 + np.log(2))

    def test_shift_invariance(self, rng):
        v = rng.normal(size=64)
        for c in (-300.0, 5.0, 700.0):
            assert log_sum_exp(v + c) == pytest.approx(log_sum_exp(v) + c, rel=1e-12)

    def test_tolerates_neg_inf(self):
        v = np.array([-np.inf, 0.0, -np.inf])
        assert log_sum_exp(v) == pytest.approx(0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_sum_exp(np.array([]))
