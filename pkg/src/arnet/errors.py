"""Exception hierarchy shared by every arnet module."""


class ArnetError(Exception):
    """Base class for all errors raised by arnet."""


class ContractError(ArnetError, ValueError):
    """An operation was called with arguments that violate its contract (shapes, ranges)."""


class ConfigError(ArnetError):
    """Invalid run, dataset or pipeline configuration."""


class TrainingDivergence(ArnetError, FloatingPointError):
    """A loss or gradient became non-finite during training."""

    def __init__(self, message, *, epoch=None, batch=None, layer=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.layer = layer


class CheckpointError(ArnetError):
    """A checkpoint file could not be parsed, or is internally inconsistent."""

    def __init__(self, message, *, field=None):
        super().__init__(message)
        self.field = field


class ParseError(ArnetError, ValueError):
    """A data file (IDX, image) is malformed."""

    def __init__(self, message, *, offset=None):
        super().__init__(message)
        self.offset = offset
