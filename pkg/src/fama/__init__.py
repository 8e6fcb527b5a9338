"""Multi-view factor alignment with analytic posterior inference.

Estimates latent factors shared across data views by averaging per-view
spectral projections, then infers loadings and residual variances through
independent conjugate regressions, yielding calibrated intervals for
intra- and inter-view covariance components without any sampling loop.
"""

from .covariance import (
    CovarianceBlocks,
    conditional_prediction,
    gaussian_loglik,
    paired_one_sided_t_test,
    point_estimates,
)
from .errors import FamaError, FamaWarning
from .estimator import FamaEstimator, check_views, fit_views
from .intervals import (
    IntervalRequest,
    IntervalResult,
    interval,
    interval_matrix,
    s_hat,
    t_hat,
    write_intervals_csv,
)
from .posterior import (
    InflationReport,
    PosteriorSample,
    inflation_factors,
    nig_posterior,
    sample_posterior,
    tune_prior_variance,
)
from .preprocess import (
    PreprocessSpec,
    fit_preprocess,
    load_views,
    rank_normal_transform,
    save_views,
)
from .rank_select import (
    JicTrace,
    approx_loglik,
    default_k_max,
    select_global_rank,
    select_view_rank,
)
from .simulate import (
    SimConfig,
    SimReport,
    concat_pca_baseline,
    empirical_coverage,
    generate_data,
    generate_true_model,
    read_sim_config,
    rel_frobenius_error,
    run_experiment,
)
from .spectral import (
    AveragedProjection,
    TruncatedSvd,
    average_projection,
    estimate_factors,
    procrustes_distance,
    truncated_svd,
    view_projection,
)
from .types import (
    FactorEstimate,
    FitArtifact,
    MultiViewDataset,
    Ranks,
    TrueModel,
    ViewPosterior,
    load_artifact,
    save_artifact,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AveragedProjection",
    "CovarianceBlocks",
    "FactorEstimate",
    "FamaError",
    "FamaEstimator",
    "FamaWarning",
    "FitArtifact",
    "InflationReport",
    "IntervalRequest",
    "IntervalResult",
    "JicTrace",
    "MultiViewDataset",
    "PosteriorSample",
    "PreprocessSpec",
    "Ranks",
    "SimConfig",
    "SimReport",
    "TrueModel",
    "TruncatedSvd",
    "ViewPosterior",
    "approx_loglik",
    "average_projection",
    "check_views",
    "concat_pca_baseline",
    "conditional_prediction",
    "default_k_max",
    "empirical_coverage",
    "estimate_factors",
    "fit_preprocess",
    "fit_views",
    "gaussian_loglik",
    "generate_data",
    "generate_true_model",
    "inflation_factors",
    "interval",
    "interval_matrix",
    "load_artifact",
    "load_views",
    "nig_posterior",
    "paired_one_sided_t_test",
    "point_estimates",
    "procrustes_distance",
    "rank_normal_transform",
    "read_sim_config",
    "rel_frobenius_error",
    "run_experiment",
    "s_hat",
    "sample_posterior",
    "save_artifact",
    "save_views",
    "select_global_rank",
    "select_view_rank",
    "t_hat",
    "truncated_svd",
    "tune_prior_variance",
    "validate",
    "view_projection",
    "write_intervals_csv",
]
