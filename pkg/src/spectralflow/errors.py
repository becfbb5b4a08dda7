"""Exception hierarchy shared by all modules."""


class SpectralFlowError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SpectralFlowError, ValueError):
    pass


class UnsupportedManifoldError(SpectralFlowError):
    pass


class DomainError(SpectralFlowError, ValueError):
    pass


class AccuracyError(SpectralFlowError):
    """A requested tolerance cannot be met with the data supplied.

    ``min_t`` is set when the limiting factor is spectral truncation at small t.
    """

    def __init__(self, message, min_t=None):
        super().__init__(message)
        self.min_t = min_t


class FitError(AccuracyError):
    pass


class ExtinctionError(DomainError):
    def __init__(self, message, t_ext):
        super().__init__(message)
        self.t_ext = t_ext


class StabilityError(SpectralFlowError):
    pass
