"""Exception hierarchy shared by all modules."""


class NlsGapError(Exception):
    """Base class for library errors."""


class ValidationError(NlsGapError, ValueError):
    """A parameter or configuration value is out of range."""


class GridMismatchError(NlsGapError, ValueError):
    """Two fields live on different grids."""


class ResamplingError(ValidationError):
    """A tabulated potential cannot be resampled onto the grid."""


class NoGapError(NlsGapError):
    """The requested spectral gap is absent or narrower than the tolerance."""


class AmbiguousSplitError(NlsGapError):
    """An eigenvalue lies strictly between the splitting thresholds."""


class EigensolveError(NlsGapError):
    """A dense eigensolve failed; ``k`` names the offending quasimomentum."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class ConvergenceError(NlsGapError):
    """An iteration cap was hit.

    ``detail`` carries whatever the caller knows about the last iterate
    (a final gradient norm, or a partial report).
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


class DegenerateFiberError(NlsGapError):
    """The fiber maximization never rose above the positivity floor."""


class EPrimeError(NlsGapError):
    """The state has no component in the positive spectral subspace."""
