from sme_corrfit.estimation.empirical import (
    CorrelationEstimate,
    empirical_correlation,
    estimate_gain,
    estimates_from_batches,
    partition_batch,
)
from sme_corrfit.estimation.fitting import (
    ConfigurationData,
    FitProblem,
    FitResult,
    SubsampleResult,
    least_squares_fit,
    parameter_sweep,
    subsample_errors,
    validate_sharp_approx,
)
from sme_corrfit.estimation.identifiability import IdentifiabilityReport, identifiability_probe
