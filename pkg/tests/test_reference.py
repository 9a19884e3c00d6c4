import numpy as np
import pytest

from vibench.numkit import CovarianceSpec
from vibench.reference import ReferenceConfig, reference_sampler, split_rhat
from vibench.targets import make_correlated_gaussian

QUICK = ReferenceConfig(chains=4, warmup=400, draws=1500, seed=2)


class TestReferenceSampler:
    def test_standard_normal_1d(self):
        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.0, dim=1))
        ref = reference_sampler(target, QUICK)
        assert abs(ref.mean[0]) < 0.05
        assert abs(ref.cov[0, 0] - 1.0) < 0.08
        assert ref.reliable

    def test_acceptance_in_band(self):
        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.5, dim=3))
        ref = reference_sampler(target, QUICK)
        assert np.all(ref.accept_rate > 0.4)
        assert np.all(ref.accept_rate < 0.95)

    def test_deterministic_given_seed(self):
        target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.3, dim=2))
        cfg = ReferenceConfig(chains=2, warmup=100, draws=300, seed=9)
        a = reference_sampler(target, cfg)
        b = reference_sampler(target, cfg)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.cov, b.cov)

    def test_eight_schools_runs(self):
        from vibench.targets import make_eight_schools

        target = make_eight_schools("non_centered")
        ref = reference_sampler(target, ReferenceConfig(chains=2, warmup=300, draws=800, seed=1))
        assert ref.mean.shape == (10,)
        assert np.all(np.isfinite(ref.cov))


class TestSplitRhat:
    def test_iid_chains_near_one(self, rng):
        draws = rng.standard_normal((4, 2000, 3))
        r = split_rhat(draws)
        assert np.all(r < 1.01)

    def test_detects_disagreement(self, rng):
        draws = rng.standard_normal((4, 500, 2))
        draws[0] += 5.0  # one chain stuck elsewhere
        r = split_rhat(draws)
        assert np.max(r) > 1.5
