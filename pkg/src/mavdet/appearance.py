"""Pluggable appearance detection and patch classification.

The pipeline treats the appearance detector and the patch classifier as
black boxes behind two small interfaces, so a learned model, an
external process, or a scripted test double can slot in without any
pipeline changes. This module defines those interfaces, the detection
record, patch extraction, target selection, and ground-truth-driven
implementations used for closed-loop testing.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import cv2
import numpy as np

from .errors import InvalidConfigError, InvalidDimensionsError
from .geometry import BBox, Frame, iou

__all__ = [
    "SOURCE_GLOBAL_APPEARANCE",
    "SOURCE_GLOBAL_MOTION",
    "SOURCE_LOCAL_APPEARANCE",
    "SOURCE_LOCAL_MOTION",
    "SOURCES",
    "LABEL_MAV",
    "LABEL_CLUTTER",
    "PATCH_SIZE",
    "Detection",
    "DetectorConfig",
    "ImageView",
    "PatchView",
    "AppearanceDetector",
    "PatchClassifier",
    "OracleDetector",
    "OracleClassifier",
    "PassthroughClassifier",
    "extract_patch",
    "select_target",
]

# Which stage of the pipeline produced a detection. Global/local refers
# to whole-frame versus search-window processing; appearance/motion to
# the detector family.
SOURCE_GLOBAL_APPEARANCE = "GAD"
SOURCE_GLOBAL_MOTION = "GMD"
SOURCE_LOCAL_APPEARANCE = "LAD"
SOURCE_LOCAL_MOTION = "LMD"
SOURCES = (
    SOURCE_GLOBAL_APPEARANCE,
    SOURCE_GLOBAL_MOTION,
    SOURCE_LOCAL_APPEARANCE,
    SOURCE_LOCAL_MOTION,
)

LABEL_MAV = "mav"
LABEL_CLUTTER = "clutter"

# Classifier input side length in pixels.
PATCH_SIZE = 32


@dataclass(frozen=True)
class Detection:
    """One detected object in full-frame coordinates."""

    box: BBox
    confidence: float
    source: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidConfigError(
                f"confidence must be in [0, 1], got {self.confidence}"
            )
        if self.source not in SOURCES:
            raise InvalidConfigError(f"unknown detection source {self.source!r}")

    def translated(self, dx: float, dy: float) -> "Detection":
        return replace(self, box=self.box.translated(dx, dy))


@dataclass(frozen=True)
class DetectorConfig:
    """Confidence thresholds for the two pipeline modes.

    The global pass demands global_threshold; the local pass runs the
    same backend at the lower local_threshold because the search window
    already constrains where the target can be.
    """

    global_threshold: float = 0.5
    local_threshold: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.local_threshold <= self.global_threshold <= 1.0:
            raise InvalidConfigError(
                "thresholds must satisfy 0 <= local <= global <= 1"
            )


@dataclass(frozen=True)
class ImageView:
    """An RGB crop handed to a detector, with enough context to locate it.

    `origin` is the full-frame coordinate of the view's top-left pixel,
    so a whole-frame view has origin (0, 0) and a search window carries
    its window corner. `frame_index` lets replay-style backends answer
    from recorded data.
    """

    pixels: np.ndarray
    frame_index: int
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        arr = self.pixels
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise InvalidDimensionsError(
                f"view pixels must be HxWx3 uint8, got {arr.dtype} {arr.shape}"
            )

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def of_frame(cls, frame: Frame) -> "ImageView":
        return cls(pixels=frame.rgb, frame_index=frame.index, origin=(0.0, 0.0))

    @classmethod
    def of_window(cls, frame: Frame, window: BBox) -> "ImageView":
        x, y, w, h = window.pixel_rect()
        x = min(max(x, 0), frame.width - 1)
        y = min(max(y, 0), frame.height - 1)
        w = min(w, frame.width - x)
        h = min(h, frame.height - y)
        return cls(
            pixels=frame.rgb[y : y + h, x : x + w],
            frame_index=frame.index,
            origin=(float(x), float(y)),
        )


@dataclass(frozen=True)
class PatchView:
    """Fixed-size RGB patch for classification, tagged with its origin box."""

    pixels: np.ndarray
    frame_index: int
    source_box: BBox

    def __post_init__(self) -> None:
        arr = self.pixels
        if arr.shape != (PATCH_SIZE, PATCH_SIZE, 3) or arr.dtype != np.uint8:
            raise InvalidDimensionsError(
                f"patch must be {PATCH_SIZE}x{PATCH_SIZE}x3 uint8, got {arr.shape}"
            )


class AppearanceDetector(abc.ABC):
    """Interface every appearance detector backend implements."""

    @abc.abstractmethod
    def detect(
        self, view: ImageView, threshold: float, source: str
    ) -> list[Detection]:
        """Detections inside `view`, in view-local coordinates.

        Only detections with confidence >= threshold are returned, each
        tagged with the caller-supplied source.
        """

    @property
    def degraded(self) -> bool:
        """True when the backend failed to serve its most recent request."""
        return False

    def close(self) -> None:
        """Release any resources; safe to call more than once."""


class PatchClassifier(abc.ABC):
    """Interface every patch classifier backend implements."""

    @abc.abstractmethod
    def classify(self, patch: PatchView) -> tuple[str, float]:
        """Label ("mav" or "clutter") and a confidence score in [0, 1]."""

    @property
    def degraded(self) -> bool:
        return False

    def close(self) -> None:
        """Release any resources; safe to call more than once."""


def extract_patch(frame: Frame, box: BBox) -> PatchView | None:
    """Crop a box out of a frame and resize it to the classifier input size.

    The box is intersected with the frame first; if nothing remains the
    patch cannot be built and None is returned.
    """
    clipped = box.clipped(frame.width, frame.height)
    if clipped is None:
        return None
    x, y, w, h = clipped.pixel_rect()
    x = min(max(x, 0), frame.width - 1)
    y = min(max(y, 0), frame.height - 1)
    w = min(w, frame.width - x)
    h = min(h, frame.height - y)
    if w < 1 or h < 1:
        return None
    crop = frame.rgb[y : y + h, x : x + w]
    resized = cv2.resize(crop, (PATCH_SIZE, PATCH_SIZE), interpolation=cv2.INTER_LINEAR)
    return PatchView(pixels=resized, frame_index=frame.index, source_box=box)


def select_target(
    detections: Sequence[Detection],
    predicted_center: tuple[float, float] | None = None,
    last_box: BBox | None = None,
) -> Detection | None:
    """Pick the single detection to track out of a candidate list.

    With a track to continue, detections whose centers fall within a
    proximity radius of the predicted center are preferred and the
    closest one wins; the radius is 1.5 times the larger side of the
    last confirmed box. Ties break on higher confidence, then smaller
    area, then box coordinates, so the choice does not depend on input
    order. Without a usable track, or when nothing is near, the highest
    confidence detection wins with the same tie-breaking.
    """
    if not detections:
        return None

    def stable_key(d: Detection) -> tuple:
        return (-d.confidence, d.box.area, d.box.x, d.box.y, d.box.w, d.box.h)

    if predicted_center is not None and last_box is not None:
        radius = 1.5 * max(last_box.w, last_box.h)
        px, py = predicted_center
        near = []
        for d in detections:
            cx, cy = d.box.center
            dist = float(np.hypot(cx - px, cy - py))
            if dist <= radius:
                near.append((dist, d))
        if near:
            return min(near, key=lambda item: (item[0],) + stable_key(item[1]))[1]
    return min(detections, key=stable_key)


class OracleDetector(AppearanceDetector):
    """Detector that answers from known per-frame boxes.

    Used to close the loop in tests and synthetic benchmarks: it
    simulates a detector of configurable quality via a dropout rate
    (whole calls that return nothing), Gaussian center jitter, and a
    confidence model that is either a constant or a (low, high) uniform
    range. All randomness is owned by a seeded generator so runs
    replay exactly.
    """

    def __init__(
        self,
        truth: Mapping[int, Sequence[BBox]],
        dropout: float = 0.0,
        jitter: float = 0.0,
        confidence: float | tuple[float, float] = 1.0,
        seed: int = 0,
    ):
        if not 0.0 <= dropout <= 1.0:
            raise InvalidConfigError("dropout must be in [0, 1]")
        if jitter < 0:
            raise InvalidConfigError("jitter must be >= 0")
        self._truth = {k: list(v) for k, v in truth.items()}
        self._dropout = dropout
        self._jitter = jitter
        self._confidence = confidence
        self._rng = np.random.default_rng(seed)

    def _draw_confidence(self) -> float:
        if isinstance(self._confidence, tuple):
            low, high = self._confidence
            return float(self._rng.uniform(low, high))
        return float(self._confidence)

    def detect(
        self, view: ImageView, threshold: float, source: str
    ) -> list[Detection]:
        if self._dropout > 0 and self._rng.random() < self._dropout:
            return []
        ox, oy = view.origin
        out: list[Detection] = []
        for gt in self._truth.get(view.frame_index, []):
            local = gt.translated(-ox, -oy)
            if self._jitter > 0:
                dx, dy = self._rng.normal(0.0, self._jitter, size=2)
                local = local.translated(float(dx), float(dy))
            conf = self._draw_confidence()
            cx, cy = local.center
            if not (0 <= cx < view.width and 0 <= cy < view.height):
                continue
            clipped = local.clipped(view.width, view.height)
            if clipped is None:
                continue
            if conf >= threshold:
                out.append(Detection(box=clipped, confidence=conf, source=source))
        return out


class OracleClassifier(PatchClassifier):
    """Classifier that labels a patch by overlap with known boxes."""

    def __init__(
        self, truth: Mapping[int, Sequence[BBox]], min_overlap: float = 0.5
    ):
        self._truth = {k: list(v) for k, v in truth.items()}
        self._min_overlap = min_overlap

    def classify(self, patch: PatchView) -> tuple[str, float]:
        for gt in self._truth.get(patch.frame_index, []):
            if iou(patch.source_box, gt) > self._min_overlap:
                return LABEL_MAV, 1.0
        return LABEL_CLUTTER, 0.0


class PassthroughClassifier(PatchClassifier):
    """Accepts everything; used when no classifier model is available."""

    def classify(self, patch: PatchView) -> tuple[str, float]:
        return LABEL_MAV, 1.0
