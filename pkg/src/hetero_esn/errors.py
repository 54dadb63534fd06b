"""Exception hierarchy shared by every module.

The CLI maps ``ConfigError`` (and subclasses) to exit code 2 and any
other ``ESNError`` to exit code 1.
"""


class ESNError(Exception):
    """Base class for all package errors."""


class ConfigError(ESNError, ValueError):
    """Invalid configuration or hyperparameter."""


class ShapeError(ConfigError):
    """Array dimensions do not agree."""


class ManifestError(ConfigError):
    """Malformed or inconsistent dataset manifest."""


class EmptyInputError(ESNError, ValueError):
    """Input too short to process."""


class NumericalError(ESNError, ArithmeticError):
    """Non-finite values or a failed numerical routine."""


class FormatError(ESNError, ValueError):
    """Corrupt or unsupported binary/text file."""
