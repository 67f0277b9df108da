"""Exception types shared across the package."""


class RdsteerError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(RdsteerError):
    """Invalid configuration value, shape, or file format."""


class NumericError(RdsteerError):
    """Non-finite values encountered during simulation or optimization."""


class UsageError(RdsteerError):
    """API misuse: wrong call order, missing tape, bad argument combination."""
