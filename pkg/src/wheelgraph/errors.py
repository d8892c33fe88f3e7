"""Exception types shared across the package."""


class WheelgraphError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(WheelgraphError):
    """Scene or image dimensions are non-positive."""


class InvalidBoxError(WheelgraphError):
    """Bounding box violates its invariants (degenerate or out of bounds)."""


class DomainError(WheelgraphError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(WheelgraphError):
    """Array or matrix shapes are inconsistent."""


class NormalizationError(WheelgraphError):
    """Input values outside the required [0, 1] range."""


class InsufficientDataError(WheelgraphError):
    """Not enough samples to fit the requested model."""


class InvalidParameterError(WheelgraphError):
    """Configuration or hyperparameter outside its valid range."""


class DegenerateVectorError(WheelgraphError):
    """Zero-norm vector where a direction is required."""


class UnsupportedOpError(WheelgraphError):
    """Backward pass encountered an op not in the tape vocabulary."""


class UndefinedLossError(WheelgraphError):
    """Loss requested over an empty candidate set."""


class TrainingDivergedError(WheelgraphError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class GenerationError(WheelgraphError):
    """Scene placement could not be satisfied within the retry budget."""


class PartitionError(WheelgraphError):
    """Dataset cannot be split as requested."""


class FormatError(WheelgraphError):
    """Serialized file is malformed or has an unknown version."""


class RenderError(WheelgraphError):
    """Prediction references an object missing from the scene."""
