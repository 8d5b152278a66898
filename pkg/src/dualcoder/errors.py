"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/config problems exit 1, data
problems exit 2, numerical failures exit 3.
"""


class DualcoderError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DualcoderError):
    """Invalid configuration or command usage."""


class DataError(DualcoderError):
    """Malformed, inconsistent, or missing input data."""


class NumericalError(DualcoderError):
    """Non-finite values or diverging optimization."""
