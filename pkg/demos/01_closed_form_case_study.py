# Best-case-scenario study: fit a mean-field Gaussian to a correlated
# Gaussian by minimizing the closed-form divergence, then ask how reliable
# the resulting density ratios are as importance weights.
#
# Run:  python3 demos/01_closed_form_case_study.py

import numpy as np

from vibench import (
    CovarianceSpec,
    EXCLUSIVE_KL,
    INCLUSIVE_KL,
    MeanFieldGaussian,
    WeightSet,
    deterministic_minimize,
    khat_of,
    make_correlated_gaussian,
    mean_field_gaussian_objective,
    min_sample_size,
)

RHO = 0.5
S_DIAG = 4000

print(f"correlated Gaussian targets, banded structure, rho={RHO}")
print(f"{'D':>4} {'objective':>14} {'sigma_1^2':>10} {'khat(w)':>8} {'khat(logw)':>10} {'min S':>12}")

for dim in (2, 5, 10, 20, 50):
    target = make_correlated_gaussian(CovarianceSpec(kind="banded", rho=RHO, dim=dim))
    for spec in (EXCLUSIVE_KL, INCLUSIVE_KL):
        # the divergence between two Gaussians is available in closed form, so
        # the optimum carries no stochastic-optimization error at all
        objective, grad = mean_field_gaussian_objective(spec, target.truth.mean, target.truth.cov)
        lam, _ = deterministic_minimize(objective, np.zeros(2 * dim), grad=grad)

        family = MeanFieldGaussian(dim)
        draws = family.draw_base(7, S_DIAG)
        thetas, logq = family.transform(lam, draws.eps)
        ws = WeightSet(target.log_joint(thetas) - logq)

        k_w = khat_of("w", ws).khat
        k_logw = khat_of("log_w", ws).khat
        print(
            f"{dim:>4} {spec.name:>14} {np.exp(2 * lam[dim]):>10.3f} "
            f"{k_w:>8.2f} {k_logw:>10.2f} {min_sample_size(k_w):>12.3g}"
        )

print()
print("reading the table: khat(w) drifts above the 0.7 reliability threshold")
print("within a dozen dimensions even for the best divergence-specific fit,")
print("while khat(log w) stays small -- sublinear functions of the ratio stay")
print("estimable long after the weights themselves become untrustworthy.")
