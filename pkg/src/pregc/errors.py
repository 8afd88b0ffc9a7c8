"""Exception types raised across the package."""


class PreGCError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PreGCError, ValueError):
    pass


class StabilityError(PreGCError, ValueError):
    """Explicit Euler interval outside the stable range."""

    def __init__(self, message: str, lambda_max: float):
        super().__init__(message)
        self.lambda_max = lambda_max


class NumericalError(PreGCError, ArithmeticError):
    """A solver produced non-finite values."""

    def __init__(self, message: str, epsilon: float | None = None, epoch: int | None = None):
        super().__init__(message)
        self.epsilon = epsilon
        self.epoch = epoch


class ParseError(PreGCError, ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
