"""Statistical screening of candidate boxes by their local motion field.

A real flying object moves coherently: the optical flow inside its box
has consistent direction, consistent speed, and nontrivial magnitude
after camera motion has been removed. Noise and parallax artifacts fail
at least one of those three tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import EmptyInputError, InvalidConfigError
from .geometry import BBox, GrayImage

__all__ = [
    "MotionClassifierConfig",
    "MotionVectors",
    "MotionFeatures",
    "extract_corner_flow",
    "angle_variance",
    "velocity_stats",
    "compute_features",
    "classify_motion",
    "classify_box",
    "mean_direction",
    "LABEL_NOISE",
    "LABEL_OBJECT",
]

LABEL_NOISE = 0
LABEL_OBJECT = 1

# Extra context kept around a candidate crop so the pyramidal tracker has
# enough image to work with near the box border.
_CROP_CONTEXT = 48


@dataclass(frozen=True)
class MotionClassifierConfig:
    """Corner extraction and decision thresholds.

    A candidate is kept only when its angle variance is at most
    max_angle_variance, its speed variance is at most
    max_speed_variance, and its mean speed is at least min_mean_speed.
    """

    max_angle_variance: float = 0.8
    max_speed_variance: float = 0.8
    min_mean_speed: float = 1.0
    max_corners: int = 50
    quality_level: float = 0.01
    min_corner_distance: float = 2.0
    box_padding: int = 4
    window: int = 21
    pyramid_levels: int = 3
    fb_error: float = 1.0

    def __post_init__(self) -> None:
        if self.max_corners < 1:
            raise InvalidConfigError("need at least one corner")
        if not 0 < self.quality_level <= 1:
            raise InvalidConfigError("quality level must be in (0, 1]")
        if self.box_padding < 0:
            raise InvalidConfigError("box padding must be >= 0")
        if self.window < 3 or self.window % 2 == 0:
            raise InvalidConfigError("tracker window must be odd and >= 3")


@dataclass(frozen=True)
class MotionVectors:
    """Per-corner displacement vectors between two frames, shape (N, 2)."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.vectors, dtype=np.float64).reshape(-1, 2)
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class MotionFeatures:
    """Summary statistics of a box's motion field."""

    angle_variance: float
    speed_variance: float
    mean_speed: float


def extract_corner_flow(
    prev: GrayImage,
    cur: GrayImage,
    box: BBox,
    config: MotionClassifierConfig = MotionClassifierConfig(),
) -> MotionVectors:
    """Track strong corners inside a candidate box from `prev` to `cur`.

    Corners are detected on the previous frame within the padded box,
    tracked forward with pyramidal Lucas-Kanade flow, and validated with
    a forward-backward round trip. The vectors are current minus
    previous position for each surviving corner; an empty result means
    the box had no trackable structure.
    """
    pad = float(config.box_padding)
    search = BBox(
        box.x - pad, box.y - pad, box.w + 2 * pad, box.h + 2 * pad
    ).clipped(prev.width, prev.height)
    if search is None:
        return MotionVectors(np.empty((0, 2)))
    cx, cy, cw, ch = search.pixel_rect()
    cw = min(cw, prev.width - cx)
    ch = min(ch, prev.height - cy)
    if cw < 3 or ch < 3:
        return MotionVectors(np.empty((0, 2)))
    corners = cv2.goodFeaturesToTrack(
        prev.data[cy : cy + ch, cx : cx + cw],
        maxCorners=config.max_corners,
        qualityLevel=config.quality_level,
        minDistance=config.min_corner_distance,
    )
    if corners is None or len(corners) == 0:
        return MotionVectors(np.empty((0, 2)))

    # Track on a larger context window rather than the full frame; the
    # pyramid build dominates the cost on large images.
    gx1 = max(cx - _CROP_CONTEXT, 0)
    gy1 = max(cy - _CROP_CONTEXT, 0)
    gx2 = min(cx + cw + _CROP_CONTEXT, prev.width)
    gy2 = min(cy + ch + _CROP_CONTEXT, prev.height)
    prev_ctx = prev.data[gy1:gy2, gx1:gx2]
    cur_ctx = cur.data[gy1:gy2, gx1:gx2]
    pts = corners.reshape(-1, 1, 2).astype(np.float32)
    pts[:, 0, 0] += cx - gx1
    pts[:, 0, 1] += cy - gy1
    lk = dict(
        winSize=(config.window, config.window),
        maxLevel=config.pyramid_levels - 1,
        criteria=(cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, 30, 0.01),
    )
    fwd, st_f, _ = cv2.calcOpticalFlowPyrLK(prev_ctx, cur_ctx, pts, None, **lk)
    bwd, st_b, _ = cv2.calcOpticalFlowPyrLK(cur_ctx, prev_ctx, fwd, None, **lk)
    rt = np.linalg.norm((bwd - pts).reshape(-1, 2), axis=1)
    ok = (st_f.ravel() == 1) & (st_b.ravel() == 1) & (rt <= config.fb_error)
    if not ok.any():
        return MotionVectors(np.empty((0, 2)))
    disp = (fwd - pts).reshape(-1, 2)[ok].astype(np.float64)
    return MotionVectors(disp)


def angle_variance(vectors: MotionVectors) -> float:
    """Population variance of the flow directions, in squared radians."""
    if vectors.count == 0:
        raise EmptyInputError("no motion vectors")
    angles = np.arctan2(vectors.vectors[:, 1], vectors.vectors[:, 0])
    return float(np.mean((angles - angles.mean()) ** 2))


def velocity_stats(vectors: MotionVectors) -> tuple[float, float]:
    """Population variance and mean of the flow magnitudes."""
    if vectors.count == 0:
        raise EmptyInputError("no motion vectors")
    speeds = np.linalg.norm(vectors.vectors, axis=1)
    mean = float(speeds.mean())
    var = float(np.mean((speeds - mean) ** 2))
    return var, mean


def compute_features(vectors: MotionVectors) -> MotionFeatures:
    """All three decision statistics for one box."""
    speed_var, mean_speed = velocity_stats(vectors)
    return MotionFeatures(
        angle_variance=angle_variance(vectors),
        speed_variance=speed_var,
        mean_speed=mean_speed,
    )


def classify_motion(
    features: MotionFeatures,
    max_angle_variance: float,
    max_speed_variance: float,
    min_mean_speed: float,
) -> int:
    """1 when the motion field looks like a single moving object, else 0.

    The decision is conservative: exceeding either variance limit or
    falling below the speed floor marks the candidate as noise. Values
    exactly at a variance limit pass; a mean speed exactly at the floor
    passes.
    """
    if features.angle_variance > max_angle_variance:
        return LABEL_NOISE
    if features.speed_variance > max_speed_variance:
        return LABEL_NOISE
    if features.mean_speed < min_mean_speed:
        return LABEL_NOISE
    return LABEL_OBJECT


def classify_box(
    prev: GrayImage,
    cur: GrayImage,
    box: BBox,
    config: MotionClassifierConfig = MotionClassifierConfig(),
) -> tuple[int, MotionFeatures | None]:
    """Extract flow for one candidate and classify it.

    Boxes with no trackable corners are labelled noise with no features.
    """
    vectors = extract_corner_flow(prev, cur, box, config)
    if vectors.count == 0:
        return LABEL_NOISE, None
    features = compute_features(vectors)
    label = classify_motion(
        features,
        config.max_angle_variance,
        config.max_speed_variance,
        config.min_mean_speed,
    )
    return label, features


def mean_direction(vectors: MotionVectors) -> float:
    """Mean flow angle in radians; handy for diagnostics overlays."""
    if vectors.count == 0:
        raise EmptyInputError("no motion vectors")
    angles = np.arctan2(vectors.vectors[:, 1], vectors.vectors[:, 0])
    return float(angles.mean())
