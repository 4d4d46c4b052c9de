from sme_corrfit.correlations.filters import CUSTOM_GRID, RECT_BIN, FilterSpec, bin_filter
from sme_corrfit.correlations.augmented import (
    MAX_ORDER,
    AugmentedGenerator,
    assemble_augmented_generator,
    normalisation_scale,
)
from sme_corrfit.correlations.correlators import (
    BINNED_EXPM,
    FILTERED_ODE,
    MODES,
    SHARP,
    SHARP_APPROX,
    CorrelationRequest,
    batch_two_point,
    binned_correlation,
    correlation,
    filtered_correlation,
    one_point_series,
    predict,
    sharp_approx_binned,
    sharp_correlation,
)
from sme_corrfit.correlations.tilted import tilted_evolution
from sme_corrfit.correlations.symmetry import SymmetryReport, parity_superop, symmetry_check
