"""
Error types raised across the package.

The CLI maps these onto exit codes (see pipeline.commands).
"""
from typing import Optional, Tuple


class CorrFitError(Exception):
    """Base class for every error raised by sme_corrfit."""


class InvalidDimensionError(CorrFitError, ValueError):
    """Operator shapes are inconsistent or a Hilbert-space size is too small."""


class BoundViolationError(CorrFitError, ValueError):
    """A model parameter lies outside its declared bounds."""

    def __init__(self, parameter: str, value: float, bounds: Tuple[float, float]):
        self.parameter = parameter
        self.value = value
        self.bounds = bounds
        super().__init__(
            f"parameter '{parameter}'={value!r} outside bounds [{bounds[0]}, {bounds[1]}]"
        )


class OrderingError(CorrFitError, ValueError):
    """Sharp correlation times are not strictly increasing."""


class InvalidRequestError(CorrFitError, ValueError):
    """A correlation request cannot be served in the requested mode."""


class BatchFormatError(CorrFitError, ValueError):
    """A trajectory batch file is malformed or does not match the model."""


class SolverError(CorrFitError, RuntimeError):
    """A deterministic solver failed."""


class StepLimitError(SolverError):
    """An adaptive integration needed more steps than allowed."""


class NonConvergenceError(SolverError):
    """An iterative scheme did not reach its tolerance."""


class DegenerateSteadyStateError(CorrFitError, RuntimeError):
    """The Liouvillian null space has dimension larger than one."""

    def __init__(self, null_dim: int, detail: Optional[str] = None):
        self.null_dim = null_dim
        msg = f"steady state is not unique (null space dimension {null_dim})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class StepSizeError(CorrFitError, RuntimeError):
    """The trajectory step is too coarse for the simulated dynamics."""


class FitConvergenceError(CorrFitError, RuntimeError):
    """A least-squares fit stopped without converging."""
