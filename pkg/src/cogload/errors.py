"""Exception types shared across the pipeline.

The CLI maps these onto process exit codes, so every failure raised by
library code should derive from :class:`CogloadError`.
"""


class CogloadError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 2


class DataValidationError(CogloadError, ValueError):
    """Input data violates a precondition (bad shape, range, ordering, file format)."""

    exit_code = 2


class ConfigError(CogloadError, ValueError):
    """Invalid or unknown configuration values."""

    exit_code = 1


class NumericalError(CogloadError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable result."""

    exit_code = 3


class InvalidWindowError(DataValidationError):
    """A window cannot yield a feature vector (too few beats, zero HF power)."""
