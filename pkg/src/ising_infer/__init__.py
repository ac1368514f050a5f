"""Estimation and hypothesis testing for one-parameter spin models on
dense regular coupling matrices: samplers, limit-law theory, point
estimators, calibrated tests, and a config-driven experiment harness."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    ConstructionError,
    IsingInferError,
    NumericError,
    ParameterError,
)
from .streams import derive_seed, substream
from .coupling import (
    FAMILIES,
    CouplingMatrix,
    LimitingSpectrum,
    SpectralSummary,
    ValidationReport,
    build_coupling,
    centered_quadratic_forms,
    limiting_spectrum,
    load_matrix,
    quadratic_form,
    save_matrix,
    spectrum,
    validate_assumptions,
)
from .sampler import (
    SpinConfiguration,
    cw_aux_counts,
    cw_aux_sample,
    cw_dlog_partition,
    cw_log_partition,
    exact_enumerate,
    glauber_sample,
    glauber_series,
    glauber_sweep_kernel,
    read_sample_dump,
    suff_stat_table,
    write_sample_dump,
)
from .theory import (
    CriticalLaw,
    critical_law,
    delta_log_partition,
    information_rate,
    law_quantile,
    log_partition_shift,
    magnetization_slope,
    magnetization_variance,
    mle_critical_cdf,
    quadratic_limit_mean,
    sample_mple_limit,
    sample_quadratic_limits,
    spontaneous_magnetization,
)
from .inference import (
    EstimateResult,
    mle_complete_large_n,
    mle_exact,
    mle_stochastic,
    mple,
    mple_from_counts,
    suff_stat_bounds,
)
from .htests import (
    Calibration,
    TestOutcome,
    TestSpec,
    asymptotic_power,
    calibrate,
    empirical_power,
    run_test,
    test_statistic,
)
from .harness import (
    ExperimentConfig,
    config_hash,
    emit,
    load_config,
    parse_config,
    read_results,
    run_experiment,
)

__all__ = [
    "__version__",
    "IsingInferError",
    "ParameterError",
    "CapacityError",
    "ConstructionError",
    "ConfigError",
    "NumericError",
    "derive_seed",
    "substream",
    "FAMILIES",
    "CouplingMatrix",
    "LimitingSpectrum",
    "SpectralSummary",
    "ValidationReport",
    "build_coupling",
    "limiting_spectrum",
    "spectrum",
    "validate_assumptions",
    "quadratic_form",
    "centered_quadratic_forms",
    "save_matrix",
    "load_matrix",
    "SpinConfiguration",
    "exact_enumerate",
    "suff_stat_table",
    "glauber_sample",
    "glauber_series",
    "glauber_sweep_kernel",
    "cw_log_partition",
    "cw_dlog_partition",
    "cw_aux_sample",
    "cw_aux_counts",
    "write_sample_dump",
    "read_sample_dump",
    "CriticalLaw",
    "critical_law",
    "law_quantile",
    "spontaneous_magnetization",
    "magnetization_variance",
    "magnetization_slope",
    "information_rate",
    "sample_quadratic_limits",
    "quadratic_limit_mean",
    "sample_mple_limit",
    "log_partition_shift",
    "delta_log_partition",
    "mle_critical_cdf",
    "EstimateResult",
    "mple",
    "mple_from_counts",
    "suff_stat_bounds",
    "mle_exact",
    "mle_stochastic",
    "mle_complete_large_n",
    "TestSpec",
    "Calibration",
    "TestOutcome",
    "test_statistic",
    "calibrate",
    "run_test",
    "empirical_power",
    "asymptotic_power",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "run_experiment",
    "emit",
    "read_results",
    "config_hash",
]
