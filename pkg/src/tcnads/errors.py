"""Exception types shared across the toolkit."""


class TcnadsError(Exception):
    """Base class for every error raised on purpose by this package."""


class ParseError(TcnadsError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(TcnadsError, ValueError):
    pass


class InsufficientDataError(TcnadsError, ValueError):
    pass


class ShapeError(TcnadsError, ValueError):
    pass


class NumericError(TcnadsError, FloatingPointError):
    pass


class UndefinedMetricError(TcnadsError, ZeroDivisionError):
    pass
