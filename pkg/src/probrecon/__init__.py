"""Gaussian probabilistic reconciliation of hierarchical time series."""
from .covariance import CovarianceEstimate, diag_cov, is_positive_definite, sample_cov, shrink_cov
from .hierarchy import (
    HierarchySpec,
    SummingMatrix,
    aggregate,
    build_summing_matrix,
    coherence_discrepancy,
)
from .models import ArmaModel, BaseForecastSet, base_forecast_all, fit_arma, forecast, insample_residuals
from .reconcile import (
    JUDecomposition,
    ReconciledGaussian,
    ReconciliationMethod,
    check_projection,
    expected_logscore_objective,
    g_matrix,
    ju_decompose,
    marginal_variances,
    mint_gstar,
    reconcile_gaussian,
)
from .scoring import (
    GaussianDensity,
    SampleSet,
    crps_empirical,
    crps_gaussian,
    energy_score,
    interval_score,
    logscore,
    logscore_full_structure,
    sample_gaussian,
    variogram_score,
)

__version__ = "0.1.0"
