"""Exception hierarchy shared across the package.

Each class maps to a CLI exit code (see cli.EXIT_CODES).
"""


class PrecFactorError(Exception):
    """Base class for all package errors."""


class ConfigError(PrecFactorError):
    """Invalid configuration, flags, or file schemas. Exit code 2."""


class DataError(PrecFactorError):
    """Malformed or non-finite input data. Exit code 3."""


class ParameterError(PrecFactorError):
    """Distribution or model parameter outside its domain. Exit code 4."""


class NumericalError(PrecFactorError):
    """Factorization failure or corrupted numerical state. Exit code 4."""


class ValidationError(PrecFactorError):
    """Sampler validation (Geweke) failure. Exit code 5."""
