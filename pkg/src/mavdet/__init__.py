"""Global-local detection of small aerial vehicles in moving-camera video."""

from .errors import (
    BackendUnavailableError,
    DegenerateConfigurationError,
    DimensionMismatchError,
    EmptyInputError,
    EmptyMatchSetError,
    InsufficientMatchesError,
    InvalidConfigError,
    InvalidDimensionsError,
    MavdetError,
    NoGroundTruthError,
    NumericDegeneracyError,
)
from .geometry import BBox, BinaryMask, Frame, GrayImage, clamp_region, iou, to_grayscale

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BinaryMask",
    "Frame",
    "GrayImage",
    "clamp_region",
    "iou",
    "to_grayscale",
    "MavdetError",
    "InvalidConfigError",
    "InvalidDimensionsError",
    "DimensionMismatchError",
    "InsufficientMatchesError",
    "DegenerateConfigurationError",
    "EmptyMatchSetError",
    "EmptyInputError",
    "NumericDegeneracyError",
    "BackendUnavailableError",
    "NoGroundTruthError",
    "__version__",
]
