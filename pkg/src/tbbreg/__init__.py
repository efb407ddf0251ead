"""Tilted beta binomial regression: distributions, Bayesian fitting, diagnostics."""

from tbbreg.distributions import (
    BetaMeanDisp,
    DomainError,
    TiltedBetaBinomialParams,
    TiltedBetaParams,
    TiltedParams,
    beta_binomial_log_pmf,
    brb_log_pmf,
    sample_tbb,
    sample_tilted,
    tbb_log_pmf,
    tbb_mean,
    tbb_params,
    tbb_variance,
    tilted_beta_mean,
    tilted_beta_pdf,
    tilted_beta_variance,
    tilted_moment,
    tilted_pdf,
    tilted_variance,
)
from tbbreg.regression import (
    Dataset,
    Family,
    ModelSpec,
    ParameterVector,
    deviance,
    linear_predictors,
    log_likelihood,
    parameter_names,
)
from tbbreg.mcmc import (
    PosteriorSample,
    PriorSpec,
    SamplerConfig,
    initial_values,
    log_posterior,
    run_chains,
)
from tbbreg.diagnostics import (
    DiagnosticsReport,
    autocorrelation,
    diagnostics_report,
    gelman_rubin_r,
    geweke_z,
    mc_error,
    pearson_residuals,
)
from tbbreg.model_selection import (
    ComparisonRow,
    compare_families,
    deviance_summary,
    dic,
)

__version__ = "0.1.0"
