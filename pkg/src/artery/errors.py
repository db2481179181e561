"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class ArteryError(Exception):
    """Base class for all package errors."""


class ConfigError(ArteryError):
    """Invalid configuration, scenario, or timing plan."""


class DataError(ArteryError):
    """Missing, malformed, or insufficient input data."""


class GridlockError(DataError):
    """Simulation aborted because no vehicle moved for too long."""


class NumericError(ArteryError):
    """Non-finite values, invalid operands, or failed numeric checks."""


class ShapeError(NumericError):
    """Operands with incompatible shapes."""
