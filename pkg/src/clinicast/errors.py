"""Exception taxonomy shared across the package.

The CLI maps each class to a machine-parsable error category and exit
code, so raise the most specific one that applies.
"""


class ClinicastError(Exception):
    """Base class for all package errors."""

    category = "error"
    exit_code = 1


class ShapeError(ClinicastError):
    """Array dimensions are incompatible with an operation."""

    category = "dimension"
    exit_code = 2


class ConfigError(ClinicastError):
    """Invalid configuration value or combination."""

    category = "config"
    exit_code = 3


class CatalogError(ClinicastError):
    """Reference to a variable that is not in the catalog."""

    category = "catalog"
    exit_code = 4


class DataError(ClinicastError):
    """Malformed or insufficient input data."""

    category = "data"
    exit_code = 5


class WindowError(DataError):
    """A grid or window does not have the expected span."""

    category = "window"
    exit_code = 6


class RolloutError(ClinicastError):
    """Autoregressive decoding got an inconsistent history."""

    category = "rollout"
    exit_code = 7


class TrainingError(ClinicastError):
    """Training diverged or was misconfigured."""

    category = "training"
    exit_code = 8


class ScoringError(ClinicastError):
    """Clinical scoring preconditions were violated."""

    category = "scoring"
    exit_code = 9


class MetricError(ClinicastError):
    """A requested metric is undefined on the given inputs."""

    category = "metric"
    exit_code = 10
