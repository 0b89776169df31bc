"""Exception types shared across the package."""


class SpecXAIError(Exception):
    """Base class for package errors."""


class ShapeError(SpecXAIError, ValueError):
    pass


class NonFiniteError(SpecXAIError, ArithmeticError):
    """A public operation produced NaN or Inf."""


class FormatError(SpecXAIError, ValueError):
    """A file does not follow the expected binary or text layout."""


class DegenerateSpectrumError(SpecXAIError, ValueError):
    """Spectrum carries no power, so Expected Frequency is undefined."""


class DataError(SpecXAIError, ValueError):
    pass
