"""Exception types shared across the package."""


class WearAuthError(Exception):
    """Base class for all package errors."""


class DataError(WearAuthError, ValueError):
    """Input data is missing, malformed, or too short."""


class ConfigError(WearAuthError, ValueError):
    """A configuration value or combination is invalid."""
