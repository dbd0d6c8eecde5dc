"""Exception hierarchy shared by every module."""


class TomographyError(Exception):
    """Base class for all errors raised by projtomo."""


class IndexOutOfRange(TomographyError, IndexError):
    pass


class ZeroCoefficient(TomographyError, ValueError):
    pass


class EqualIndices(TomographyError, ValueError):
    pass


class DimensionMismatch(TomographyError, ValueError):
    pass


class InvalidRank(TomographyError, ValueError):
    pass


class ZeroTrace(TomographyError, ValueError):
    pass


class NonSquare(TomographyError, ValueError):
    pass


class NumericFailure(TomographyError, ArithmeticError):
    """Failures caused by ill-posed numerics rather than bad input shape."""


class DegenerateAngles(NumericFailure):
    pass


class IllConditioned(NumericFailure):
    pass


class VanishingAmplitude(NumericFailure):
    pass


class MissingExpectation(TomographyError, KeyError):
    pass


class InvalidEfficiency(TomographyError, ValueError):
    pass


class CutoffTooSmall(TomographyError, ValueError):
    pass


class ConfigInvalid(TomographyError, ValueError):
    pass


class IllConditionedWarning(RuntimeWarning):
    """Emitted when an inversion proceeds in a regime with large noise amplification."""
