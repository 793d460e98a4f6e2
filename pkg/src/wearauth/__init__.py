"""Soft-biometric authentication for wearables from heart rate, gait and
breathing audio."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, WearAuthError  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND", "ConfigError", "DataError", "WearAuthError"]
