"""Bayesian estimation of Archimedean copulas with spline-based generators."""

from .basis import BSplineBasis, PenaltyMatrix, build_basis, difference_matrix, difference_penalty, eval_basis
from .conditional import (
    AdditiveParams,
    FlexPowerParams,
    TensorParams,
    additive_params,
    conditional_tau,
    eval_conditional_generator,
    flexpower_params,
    tensor_params,
)
from .data import AffineMap, ObservationSet
from .generator import (
    InversionError,
    SKernel,
    SplineGenerator,
    copula_cdf,
    eval_generator,
    invert_generator,
    kendall_tau,
    transform_S,
)
from .inference import (
    FitResult,
    PosteriorDraws,
    adaptive_block_metropolis,
    importance_sample,
    map_estimate,
    metropolis_accept,
)
from .parametric import Family, ParametricCopula, TauFunction, sample_data, tau_of_theta, theta_of_tau
from .posterior import (
    DensityError,
    PriorConfig,
    build_model,
    log_likelihood,
    log_marginal_posterior,
)
from .summaries import CurveEstimate, StudyReport, dic, posterior_functional, study_metrics, tau_curve

__version__ = "0.1.0"
