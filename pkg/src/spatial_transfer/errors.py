"""Exception types shared across the package."""


class SpatialTransferError(Exception):
    pass


class DomainError(SpatialTransferError, ValueError):
    """Argument outside the mathematical domain of a function."""


class DimensionMismatch(SpatialTransferError, ValueError):
    pass


class NotPositiveDefinite(SpatialTransferError, ArithmeticError):
    """Cholesky failed for every jitter in the escalation schedule."""


class EmptySpec(SpatialTransferError, ValueError):
    pass


class EmptyDataset(SpatialTransferError, ValueError):
    pass


class FitFailed(SpatialTransferError, RuntimeError):
    pass


class FormatError(SpatialTransferError, ValueError):
    """Weight file is truncated, corrupt, or of an unknown version."""


class ArchitectureMismatch(FormatError):
    pass


class ConfigError(SpatialTransferError, ValueError):
    pass
