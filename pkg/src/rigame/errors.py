"""Exception types shared across the package.

The CLI maps these onto exit codes: data validation problems exit with 4,
numerical failures with 3.
"""


class RigameError(Exception):
    """Base class for all package errors."""


class DataValidationError(RigameError):
    """Malformed or contract-violating input data."""


class ConfigError(DataValidationError):
    """Invalid configuration; carries the offending JSON path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class NumericalError(RigameError):
    """A numerical routine could not produce a valid result."""


class IdentificationError(NumericalError):
    """A rank or variation condition needed for identification failed."""


class MultiplicityError(NumericalError):
    """Multiple equilibria where a unique one was required."""
