# A mean-field approximation has zero posterior correlations by construction.
# Importance reweighting of its own draws recovers them, and Pareto smoothing
# stabilizes the reweighting.
#
# Run:  python3 demos/03_psis_moment_correction.py

import numpy as np

from vibench import (
    CovarianceSpec,
    MeanFieldGaussian,
    estimate_moments,
    make_correlated_gaussian,
    relative_error,
)

D = 5
target = make_correlated_gaussian(CovarianceSpec(kind="uniform", rho=0.5, dim=D))
family = MeanFieldGaussian(D)

# moment-matched mean-field fit: correct marginals, no correlations
lam = np.concatenate([np.zeros(D), 0.5 * np.log(np.diag(target.truth.cov))])

print(f"true covariance has 0.5 on every off-diagonal (D={D})")
print(f"{'method':>8} {'offdiag est':>12} {'cov err':>9} {'khat':>6}")
for method in ("plain_q", "snis", "psis"):
    est = estimate_moments(family, lam, target, 20_000, method=method, seed=11)
    err = relative_error(est, target.truth)
    off = est.cov[~np.eye(D, dtype=bool)]
    khat = "" if est.khat is None else f"{est.khat:.2f}"
    print(f"{method:>8} {np.mean(off):>12.3f} {err.cov_err:>9.3f} {khat:>6}")

print()
print("plain draws from q miss the correlations entirely; the self-normalized")
print("weights restore most of them. With khat around 0.5 the raw and smoothed")
print("corrections agree; smoothing earns its keep as the tail gets heavier.")
