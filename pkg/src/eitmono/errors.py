"""Exception types shared across the package."""


class EitMonoError(Exception):
    """Base class for all package errors."""


class ParameterError(EitMonoError, ValueError):
    """An argument violates an operation's precondition."""


class NumericalError(EitMonoError, RuntimeError):
    """A factorization, solve or eigen-decomposition failed or lost accuracy."""


class InconsistentDataError(EitMonoError):
    """Measured data contradicts the test configuration (e.g. C = all cells fails)."""
