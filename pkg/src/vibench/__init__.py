"""vibench: black-box variational inference with tail-index reliability diagnostics."""

__version__ = "0.1.0"

from .diagnostics import (
    KHAT_THRESHOLD,
    ParetoFit,
    fit_gpd,
    khat_of,
    min_sample_size,
    moments_required,
    psis_smooth,
)
from .divergences import (
    CHI_SQ,
    EXCLUSIVE_KL,
    INCLUSIVE_KL,
    TAIL_ADAPTIVE,
    DivergenceSpec,
    WeightSet,
    alpha_divergence,
    analytic_divergence,
    f_eval,
    gaussian_kl,
    gaussian_power_integral,
    get_divergence,
    mc_loss,
)
from .estimators import MomentEstimate, estimate_moments, relative_error, snis_expectation
from .families import (
    BaseDraws,
    Family,
    FamilyParams,
    MeanFieldGaussian,
    MeanFieldStudentT,
    PlanarFlow,
    RealNVPFlow,
    make_family,
)
from .gradients import (
    GradientEstimate,
    entropy_form_rp_gradient,
    rp_gradient,
    score_gradient,
    tail_adaptive_gradient,
)
from .numkit import (
    CholeskyFactor,
    CovarianceSpec,
    CovKind,
    build_covariance,
    log_sum_exp,
    mvn_logpdf,
    student_t_logpdf,
)
from .optimize import (
    OptimizerConfig,
    OptTrace,
    check_convergence,
    deterministic_minimize,
    fit,
    mean_field_gaussian_objective,
    step,
)
from .reference import ReferenceConfig, ReferenceMoments, reference_sampler
from .targets import (
    RegressionDataset,
    TargetModel,
    TargetTruth,
    make_correlated_gaussian,
    make_eight_schools,
    make_robust_regression,
)
