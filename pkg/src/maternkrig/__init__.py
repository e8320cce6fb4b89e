"""Matern Gaussian-process estimation, kriging error analysis, and simulation studies.

The package evaluates Matern correlations and spectral densities, fits the
variance/range pair by exact, profile, or tapered likelihood with intervals
for the microergodic ratio sigma2 / rho^(2 nu), quantifies kriging error
under range mis-specification, and reproduces coverage and prediction-error
tables through a deterministic, parallelizable Monte Carlo harness.
"""

from .covariance import (
    MaternParams,
    correlation_cholesky,
    correlation_matrix,
    cross_correlation,
    cross_distances,
    effective_range_to_rho,
    matern_correlation,
    matern_spectral_density,
    pairwise_distances,
    taper_correlation,
)
from .estimation import (
    FitConfig,
    FitResult,
    FixedRhoEstimator,
    ProfileOptimizer,
    fit_fixed_rho,
    fit_mle,
    fit_tapered,
    log_likelihood,
    microergodic,
    profile_loglik,
    profile_sigma2,
)
from .estimator import MaternKriging
from .exceptions import (
    ConvergenceError,
    DegenerateDataError,
    ExperimentError,
    FactorizationError,
    MaternKrigError,
)
from .prediction import (
    KrigingOutput,
    KrigingSolver,
    krig_predict,
    kriging_output,
    naive_mspe,
    prediction_interval,
    true_mspe,
    variance_ratio_curve,
)
from .simulation import (
    CellResult,
    ExperimentConfig,
    ExperimentReport,
    RngStream,
    design_stream,
    nested_subsets,
    perturbed_grid,
    prediction_grid,
    replicate_stream,
    run_experiment,
    simulate_gp,
)

__version__ = "0.1.0"

__all__ = [
    "CellResult",
    "ConvergenceError",
    "DegenerateDataError",
    "ExperimentConfig",
    "ExperimentError",
    "ExperimentReport",
    "FactorizationError",
    "FitConfig",
    "FitResult",
    "FixedRhoEstimator",
    "KrigingOutput",
    "KrigingSolver",
    "MaternKrigError",
    "MaternKriging",
    "MaternParams",
    "ProfileOptimizer",
    "RngStream",
    "correlation_cholesky",
    "correlation_matrix",
    "cross_correlation",
    "cross_distances",
    "design_stream",
    "effective_range_to_rho",
    "fit_fixed_rho",
    "fit_mle",
    "fit_tapered",
    "krig_predict",
    "kriging_output",
    "log_likelihood",
    "matern_correlation",
    "matern_spectral_density",
    "microergodic",
    "naive_mspe",
    "nested_subsets",
    "pairwise_distances",
    "perturbed_grid",
    "prediction_grid",
    "prediction_interval",
    "profile_loglik",
    "profile_sigma2",
    "replicate_stream",
    "run_experiment",
    "simulate_gp",
    "taper_correlation",
    "true_mspe",
    "variance_ratio_curve",
]
