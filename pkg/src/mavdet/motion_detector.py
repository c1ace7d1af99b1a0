"""Motion-based object detection over one frame pair.

This stage chains camera-motion compensation, adaptive frame
differencing, and the motion-statistics screen into a single call that
yields candidate detections. It operates equally on whole frames and on
search-window crops; the caller passes the crop origin so results come
back in full-frame coordinates either way.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .appearance import Detection
from .geometry import BBox, GrayImage
from .motioncomp import AlignmentConfig, Homography, align_frames
from .motion_classifier import (
    LABEL_OBJECT,
    MotionClassifierConfig,
    classify_box,
)
from .segmentation import (
    SegmentationConfig,
    binarize,
    extract_candidates,
    frame_difference,
    light_intensity_term,
)

__all__ = ["MotionDetectorResult", "MotionDetector"]

# The configured grid is a budget for a full frame at this resolution.
# Smaller inputs (search windows, low-res clips) keep the same spatial
# density instead of the same point count, so the cost of tracking
# shrinks with the area being examined.
REFERENCE_WIDTH = 1920
REFERENCE_HEIGHT = 1080
MIN_GRID = 6


@dataclass(frozen=True)
class MotionDetectorResult:
    """Candidates that survived the motion screen, plus stage diagnostics."""

    detections: tuple[Detection, ...]
    homography: Homography
    fallback: bool
    light_term: float
    motion_term: float
    raw_candidates: tuple[BBox, ...]


class MotionDetector:
    """Detects independently moving objects between two aligned frames."""

    def __init__(
        self,
        alignment: AlignmentConfig = AlignmentConfig(),
        segmentation: SegmentationConfig = SegmentationConfig(),
        motion: MotionClassifierConfig = MotionClassifierConfig(),
    ):
        self.alignment = alignment
        self.segmentation = segmentation
        self.motion = motion

    def _alignment_for(self, width: int, height: int) -> AlignmentConfig:
        cols = min(
            self.alignment.grid_cols,
            max(MIN_GRID, round(self.alignment.grid_cols * width / REFERENCE_WIDTH)),
        )
        rows = min(
            self.alignment.grid_rows,
            max(MIN_GRID, round(self.alignment.grid_rows * height / REFERENCE_HEIGHT)),
        )
        cols = max(1, min(cols, width))
        rows = max(1, min(rows, height))
        if cols == self.alignment.grid_cols and rows == self.alignment.grid_rows:
            return self.alignment
        return replace(self.alignment, grid_cols=cols, grid_rows=rows)

    def detect(
        self,
        prev: GrayImage,
        cur: GrayImage,
        source: str,
        origin: tuple[float, float] = (0.0, 0.0),
    ) -> MotionDetectorResult:
        """Run the full motion path on one frame pair.

        The previous frame is aligned onto the current one, their
        difference is thresholded adaptively, and each candidate box is
        screened by its corner-flow statistics against the aligned
        previous frame so that camera motion does not count as object
        motion. Survivors are reported at confidence 1.0, translated by
        `origin` into full-frame coordinates.
        """
        aligned = align_frames(prev, cur, self._alignment_for(cur.width, cur.height))
        light = light_intensity_term(cur, prev)
        diff = frame_difference(cur, aligned.warped, aligned.valid)
        mask = binarize(diff, self.segmentation, light, aligned.background_motion)
        candidates = extract_candidates(mask, self.segmentation)
        kept: list[Detection] = []
        for box in candidates:
            label, _ = classify_box(aligned.warped, cur, box, self.motion)
            if label == LABEL_OBJECT:
                kept.append(
                    Detection(
                        box=box.translated(origin[0], origin[1]),
                        confidence=1.0,
                        source=source,
                    )
                )
        return MotionDetectorResult(
            detections=tuple(kept),
            homography=aligned.homography,
            fallback=aligned.fallback,
            light_term=light,
            motion_term=aligned.background_motion,
            raw_candidates=tuple(candidates),
        )
