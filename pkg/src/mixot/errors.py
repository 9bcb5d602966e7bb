"""Exception types raised across the package."""


class MixotError(Exception):
    """Base class for package errors."""


class ConfigError(MixotError, ValueError):
    """Invalid user configuration (bad field, missing file, unknown name)."""


class UnsupportedError(MixotError, NotImplementedError):
    """Operation not available for this kernel / family combination."""


class EstimationError(MixotError, RuntimeError):
    """An estimator could not produce a usable result."""


class ExperimentFailed(MixotError, RuntimeError):
    """A Monte Carlo run exceeded its failed-replicate budget."""
