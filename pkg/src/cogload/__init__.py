"""ECG to HRV to multitask expertise and cognitive-load classification."""

from .errors import CogloadError, ConfigError, DataValidationError, InvalidWindowError, NumericalError

__version__ = "0.1.0"

__all__ = ["CogloadError", "ConfigError", "DataValidationError", "InvalidWindowError", "NumericalError"]
