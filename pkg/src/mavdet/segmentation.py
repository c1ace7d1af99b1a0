"""Moving-object segmentation on aligned frame pairs.

After camera motion has been compensated, residual intensity change is
assumed to come from independently moving objects plus noise. The
difference image is binarized with a threshold that adapts to global
illumination change and to how well the background model fit, then
cleaned up morphologically and grouped into candidate boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DimensionMismatchError, InvalidConfigError
from .geometry import BBox, BinaryMask, GrayImage

__all__ = [
    "SegmentationConfig",
    "DiffImage",
    "frame_difference",
    "light_intensity_term",
    "binarize",
    "extract_candidates",
    "merge_candidates",
]


@dataclass(frozen=True)
class SegmentationConfig:
    """Thresholding, cleanup, and grouping parameters.

    base_threshold is the noise floor added on top of the two adaptive
    terms; light_gain and motion_gain weight the illumination-change and
    residual-motion statistics. Components smaller than min_area pixels
    are dropped, and boxes closer than merge_distance (edge to edge) are
    merged.
    """

    base_threshold: float = 5.0
    light_gain: float = 1.0
    motion_gain: float = 1.0
    min_area: int = 30
    merge_distance: float = 15.0
    open_size: int = 3
    close_size: int = 7
    close_iterations: int = 2

    def __post_init__(self) -> None:
        if self.base_threshold < 0:
            raise InvalidConfigError("base threshold must be >= 0")
        if self.light_gain < 0 or self.motion_gain < 0:
            raise InvalidConfigError("gains must be >= 0")
        if self.min_area < 1:
            raise InvalidConfigError("min area must be >= 1")
        if self.merge_distance < 0:
            raise InvalidConfigError("merge distance must be >= 0")
        for size in (self.open_size, self.close_size):
            if size < 1 or size % 2 == 0:
                raise InvalidConfigError("kernel sizes must be odd and >= 1")
        if self.close_iterations < 0:
            raise InvalidConfigError("close iterations must be >= 0")


@dataclass(frozen=True)
class DiffImage:
    """Absolute difference of an aligned frame pair."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = self.data
        if arr.ndim != 2 or arr.dtype != np.uint8:
            raise DimensionMismatchError(
                f"difference image must be HxW uint8, got {arr.dtype} {arr.shape}"
            )
        out = np.ascontiguousarray(arr)
        if out is arr and arr.flags.writeable:
            out = arr.copy()
        out.setflags(write=False)
        object.__setattr__(self, "data", out)


def frame_difference(
    cur: GrayImage, aligned_prev: GrayImage, valid: BinaryMask | None = None
) -> DiffImage:
    """Per-pixel absolute difference, zeroed where the warp had no data."""
    if cur.data.shape != aligned_prev.data.shape:
        raise DimensionMismatchError(
            f"frame shapes differ: {cur.data.shape} vs {aligned_prev.data.shape}"
        )
    diff = cv2.absdiff(cur.data, aligned_prev.data)
    if valid is not None:
        if valid.data.shape != cur.data.shape:
            raise DimensionMismatchError(
                f"mask shape differs: {valid.data.shape} vs {cur.data.shape}"
            )
        diff[valid.data == 0] = 0
    return DiffImage(diff)


def light_intensity_term(cur: GrayImage, prev: GrayImage) -> float:
    """Mean absolute intensity change between the raw (unaligned) frames.

    Large values indicate a global illumination shift that should raise
    the segmentation threshold rather than produce detections.
    """
    if cur.data.shape != prev.data.shape:
        raise DimensionMismatchError(
            f"frame shapes differ: {cur.data.shape} vs {prev.data.shape}"
        )
    return float(np.mean(cv2.absdiff(cur.data, prev.data)))


def binarize(
    diff: DiffImage,
    config: SegmentationConfig,
    light_term: float,
    motion_term: float,
) -> BinaryMask:
    """Threshold the difference image adaptively.

    The effective threshold is base + light_gain * light_term +
    motion_gain * motion_term; only strictly larger differences become
    foreground.
    """
    if light_term < 0 or motion_term < 0:
        raise InvalidConfigError("adaptive terms must be >= 0")
    threshold = (
        config.base_threshold
        + config.light_gain * light_term
        + config.motion_gain * motion_term
    )
    fg = diff.data.astype(np.float64) > threshold
    return BinaryMask(fg.astype(np.uint8) * 255)


def merge_candidates(boxes: list[BBox], merge_distance: float) -> list[BBox]:
    """Merge boxes transitively while any pair is closer than the limit.

    Distance is the Euclidean edge-to-edge gap, so overlapping boxes are
    at distance zero. The result is stable: no two surviving boxes are
    within merge_distance of each other.
    """
    out = list(boxes)
    merged = True
    while merged:
        merged = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                if out[i].gap(out[j]) < merge_distance:
                    union = out[i].union(out[j])
                    rest = [b for k, b in enumerate(out) if k not in (i, j)]
                    out = rest + [union]
                    merged = True
                    break
            if merged:
                break
    return out


def extract_candidates(mask: BinaryMask, config: SegmentationConfig) -> list[BBox]:
    """Candidate boxes from a foreground mask.

    Applies one morphological opening to kill isolated noise pixels,
    repeated closings to bridge the split silhouettes a moving object
    leaves in a difference image, keeps 8-connected components of at
    least min_area pixels, and merges nearby boxes.
    """
    open_kernel = np.ones((config.open_size, config.open_size), dtype=np.uint8)
    close_kernel = np.ones((config.close_size, config.close_size), dtype=np.uint8)
    cleaned = cv2.morphologyEx(mask.data, cv2.MORPH_OPEN, open_kernel, iterations=1)
    if config.close_iterations > 0:
        cleaned = cv2.morphologyEx(
            cleaned, cv2.MORPH_CLOSE, close_kernel, iterations=config.close_iterations
        )
    count, _, stats, _ = cv2.connectedComponentsWithStats(cleaned, connectivity=8)
    boxes: list[BBox] = []
    for label in range(1, count):
        area = int(stats[label, cv2.CC_STAT_AREA])
        if area < config.min_area:
            continue
        boxes.append(
            BBox(
                float(stats[label, cv2.CC_STAT_LEFT]),
                float(stats[label, cv2.CC_STAT_TOP]),
                float(stats[label, cv2.CC_STAT_WIDTH]),
                float(stats[label, cv2.CC_STAT_HEIGHT]),
            )
        )
    return merge_candidates(boxes, config.merge_distance)
