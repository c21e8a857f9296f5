"""Exception types raised across the package."""


class SqSplatError(Exception):
    """Base class for all package errors."""


class DegenerateRotation(SqSplatError, ValueError):
    pass


class SingularCovariance(SqSplatError, ValueError):
    pass


class DimensionMismatch(SqSplatError, ValueError):
    pass


class EmptyCloud(SqSplatError, ValueError):
    pass


class OutOfOrderRecord(SqSplatError, ValueError):
    pass


class ShapeMismatch(SqSplatError, ValueError):
    pass


class EmptyStream(SqSplatError, ValueError):
    pass


class MissingAssembly(SqSplatError, ValueError):
    pass


class TrainingDiverged(SqSplatError, RuntimeError):
    """Loss became non-finite. ``log`` holds the records collected so far."""

    def __init__(self, message, log=None, model=None):
        super().__init__(message)
        self.log = log if log is not None else []
        self.model = model


class IoFailure(SqSplatError, OSError):
    pass
