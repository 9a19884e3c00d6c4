# The eight-schools posterior is low dimensional but funnel shaped; a
# mean-field Gaussian fits its non-centered parameterization far better than
# the centered one. The weight-tail diagnostic sees that directly.
#
# Run:  python3 demos/04_eight_schools_reparameterization.py  (about a minute)

import numpy as np

from vibench import (
    EXCLUSIVE_KL,
    MeanFieldGaussian,
    OptimizerConfig,
    WeightSet,
    fit,
    khat_of,
    make_eight_schools,
    min_sample_size,
)

BUDGET = OptimizerConfig(max_iters=3000, draws=10, seed=0)

for parameterization in ("centered", "non_centered"):
    target = make_eight_schools(parameterization)
    family = MeanFieldGaussian(target.dim)
    lam, trace = fit(target, family, EXCLUSIVE_KL,
                     OptimizerConfig(max_iters=BUDGET.max_iters, draws=BUDGET.draws, seed=0))

    draws = family.draw_base(4, 4000)
    thetas, logq = family.transform(lam, draws.eps)
    ws = WeightSet(target.log_joint(thetas) - logq)
    k = khat_of("w", ws).khat

    mu_school = np.round(lam[:8], 1)
    print(f"{parameterization:>13}: khat(w) = {k:+.2f}  "
          f"min sample size = {min_sample_size(k):,.0f}  "
          f"(fit {trace.termination} @ {trace.iterations})")

print()
print("same model, same data, same budget: moving the funnel geometry out of")
print("the posterior (non-centered coordinates) is worth more than any amount")
print("of extra optimization in the centered ones.")
