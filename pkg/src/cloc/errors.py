"""Exception types raised across the package."""


class ClocError(Exception):
    """Base class for all package errors."""


class CoordinateOutOfRange(ClocError, ValueError):
    pass


class DegenerateBox(ClocError, ValueError):
    pass


class OddDimension(ClocError, ValueError):
    pass


class ShapeMismatch(ClocError, ValueError):
    pass


class EmptyBatch(ClocError, ValueError):
    pass


class NoRegions(ClocError, ValueError):
    pass


class PlacementFailure(ClocError, RuntimeError):
    pass


class CorruptRecord(ClocError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VersionMismatch(ClocError, ValueError):
    pass


class ChecksumMismatch(ClocError, ValueError):
    pass


class ZeroImages(ClocError, ValueError):
    pass


class UnknownClass(ClocError, ValueError):
    pass


class NonFiniteLoss(ClocError, FloatingPointError):
    def __init__(self, component: str, value: float):
        self.component = component
        super().__init__(f"non-finite {component}: {value}")
