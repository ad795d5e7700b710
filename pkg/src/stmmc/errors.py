"""Exception types shared across the pipeline."""


class StmmcError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(StmmcError):
    """A data file is malformed or violates an input invariant."""


class ConfigError(StmmcError):
    """A run configuration could not be parsed or is inconsistent."""


class TrainError(StmmcError):
    """Training failed (e.g. the total loss diverged to NaN)."""


class ClusterError(StmmcError):
    """The Gaussian mixture could not be fit."""
