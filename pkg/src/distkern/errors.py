"""Exception hierarchy. The CLI maps these to distinct exit codes."""


class DistkernError(Exception):
    """Base class for all package errors."""


class ConfigError(DistkernError):
    """Invalid configuration: bad parameter values, grids, or CLI arguments."""


class DataError(DistkernError):
    """Invalid input data: manifests, CSV files, labels, partitions."""


class EstimationError(DataError):
    """A divergence or kernel value could not be estimated for the given data."""


class ConvergenceError(DistkernError):
    """An iterative solver hit its iteration cap before reaching tolerance."""
