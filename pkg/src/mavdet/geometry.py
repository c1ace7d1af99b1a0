"""Image containers and box arithmetic used by every stage of the pipeline.

Coordinates are pixels with the origin at the top-left corner and the y
axis pointing down. Boxes store their top-left corner and side lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionsError

__all__ = [
    "BBox",
    "Frame",
    "GrayImage",
    "BinaryMask",
    "iou",
    "to_grayscale",
    "clamp_region",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle (x, y) top-left corner, (w, h) side lengths."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise InvalidDimensionsError(
                f"box sides must be positive, got {self.w}x{self.h}"
            )

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    def union(self, other: "BBox") -> "BBox":
        x1 = min(self.x, other.x)
        y1 = min(self.y, other.y)
        x2 = max(self.x2, other.x2)
        y2 = max(self.y2, other.y2)
        return BBox(x1, y1, x2 - x1, y2 - y1)

    def clipped(self, width: int, height: int) -> "BBox | None":
        """Intersection with the image rectangle, or None if empty."""
        x1 = max(self.x, 0.0)
        y1 = max(self.y, 0.0)
        x2 = min(self.x2, float(width))
        y2 = min(self.y2, float(height))
        if x2 - x1 <= 0 or y2 - y1 <= 0:
            return None
        return BBox(x1, y1, x2 - x1, y2 - y1)

    def pixel_rect(self) -> tuple[int, int, int, int]:
        """Integer (x, y, w, h) covering the box, at least one pixel wide."""
        x1 = int(math.floor(self.x))
        y1 = int(math.floor(self.y))
        x2 = int(math.ceil(self.x2))
        y2 = int(math.ceil(self.y2))
        return x1, y1, max(x2 - x1, 1), max(y2 - y1, 1)

    def gap(self, other: "BBox") -> float:
        """Euclidean edge-to-edge distance; zero when the boxes overlap."""
        dx = max(0.0, max(self.x, other.x) - min(self.x2, other.x2))
        dy = max(0.0, max(self.y, other.y) - min(self.y2, other.y2))
        return math.hypot(dx, dy)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Frame:
    """A single RGB video frame with its position in the sequence."""

    index: int
    rgb: np.ndarray

    def __post_init__(self) -> None:
        if self.index < 0:
            raise InvalidDimensionsError(f"frame index must be >= 0, got {self.index}")
        arr = self.rgb
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise InvalidDimensionsError(
                f"frame pixels must be HxWx3 uint8, got {arr.dtype} {arr.shape}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidDimensionsError("frame must have positive size")
        object.__setattr__(self, "rgb", _readonly(arr))

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


@dataclass(frozen=True)
class GrayImage:
    """Single-channel uint8 image."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = self.data
        if arr.ndim != 2 or arr.dtype != np.uint8:
            raise InvalidDimensionsError(
                f"gray image must be HxW uint8, got {arr.dtype} {arr.shape}"
            )
        object.__setattr__(self, "data", _readonly(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class BinaryMask:
    """Boolean pixel mask stored as uint8 with values 0 or 255."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = self.data
        if arr.dtype == np.bool_:
            arr = arr.astype(np.uint8) * 255
        if arr.ndim != 2 or arr.dtype != np.uint8:
            raise InvalidDimensionsError(
                f"mask must be HxW uint8, got {arr.dtype} {arr.shape}"
            )
        bad = (arr != 0) & (arr != 255)
        if bad.any():
            raise InvalidDimensionsError("mask values must be 0 or 255")
        object.__setattr__(self, "data", _readonly(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def count(self) -> int:
        return int(np.count_nonzero(self.data))


def to_grayscale(frame: Frame) -> GrayImage:
    """Rec. 601 luma with integer arithmetic, rounding half away from zero.

    gray = (299 R + 587 G + 114 B + 500) // 1000 so that an already gray
    frame (R == G == B) converts to exactly its channel value.
    """
    rgb = frame.rgb.astype(np.uint32)
    luma = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return GrayImage(luma.astype(np.uint8))


def clamp_region(
    center: tuple[float, float], side: int, width: int, height: int
) -> BBox:
    """Square window of the given side centred on a point, kept inside the image.

    The side is first capped at the image's smaller dimension, then the
    window is translated (never shrunk) so it lies fully inside the
    image rectangle.
    """
    if width < 1 or height < 1:
        raise InvalidDimensionsError(f"image must be positive, got {width}x{height}")
    if side < 1:
        raise InvalidDimensionsError(f"window side must be >= 1, got {side}")
    w = min(side, width, height)
    h = w
    x = int(round(center[0] - w / 2.0))
    y = int(round(center[1] - h / 2.0))
    x = min(max(x, 0), width - w)
    y = min(max(y, 0), height - h)
    return BBox(float(x), float(y), float(w), float(h))
