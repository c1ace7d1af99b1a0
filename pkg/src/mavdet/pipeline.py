"""Global-local detection pipeline with a mode switcher.

In global mode the whole frame is searched: the appearance detector
first, and only if it comes up empty, the motion path. A confirmed
detection seeds a track and drops the pipeline into local mode, where
the same two-stage search runs inside an adaptive window placed by the
tracker. A run of consecutive local misses sends the pipeline back to
global mode.

The motion path only executes on frames where the appearance detector
failed, so its cost is not paid when the cheap path succeeds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .appearance import (
    LABEL_MAV,
    SOURCE_GLOBAL_APPEARANCE,
    SOURCE_GLOBAL_MOTION,
    SOURCE_LOCAL_APPEARANCE,
    SOURCE_LOCAL_MOTION,
    AppearanceDetector,
    Detection,
    DetectorConfig,
    ImageView,
    PatchClassifier,
    extract_patch,
    select_target,
)
from .errors import InvalidConfigError
from .geometry import BBox, Frame, GrayImage, to_grayscale
from .motioncomp import AlignmentConfig, Homography
from .motion_classifier import MotionClassifierConfig
from .motion_detector import MotionDetector
from .segmentation import SegmentationConfig
from .tracking import (
    KalmanModel,
    KalmanParams,
    TrackState,
    init_track,
    kf_predict,
    kf_update,
    measure_velocity,
    predict_center,
    search_region,
)

__all__ = [
    "MODE_GLOBAL",
    "MODE_LOCAL",
    "PipelineConfig",
    "FrameResult",
    "switch_mode",
    "Pipeline",
]

MODE_GLOBAL = "global"
MODE_LOCAL = "local"

_MODULE_TAGS = (
    SOURCE_GLOBAL_APPEARANCE,
    SOURCE_GLOBAL_MOTION,
    SOURCE_LOCAL_APPEARANCE,
    SOURCE_LOCAL_MOTION,
)


@dataclass(frozen=True)
class PipelineConfig:
    """All tunables of the pipeline in one place."""

    detector: DetectorConfig = field(default_factory=DetectorConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    motion: MotionClassifierConfig = field(default_factory=MotionClassifierConfig)
    kalman: KalmanParams = field(default_factory=KalmanParams)
    lost_limit: int = 30
    region_base: int = 300
    region_growth: int = 4

    def __post_init__(self) -> None:
        if self.lost_limit < 1:
            raise InvalidConfigError("lost limit must be >= 1")
        if self.region_base < 1 or self.region_growth < 0:
            raise InvalidConfigError("region parameters out of range")


@dataclass(frozen=True)
class FrameResult:
    """What the pipeline concluded about one frame."""

    index: int
    mode: str
    detection: Detection | None
    region: BBox | None
    modules_run: tuple[str, ...]
    latency_ms: dict[str, float]
    mode_after: str
    degraded: bool = False


def switch_mode(mode: str, success: bool, failures: int, limit: int = 30) -> str:
    """Next pipeline mode given this frame's outcome.

    `failures` counts the consecutive local misses before the current
    frame; once it reaches the limit, another local miss abandons the
    track and the search goes global again.
    """
    if mode not in (MODE_GLOBAL, MODE_LOCAL):
        raise InvalidConfigError(f"unknown mode {mode!r}")
    if failures < 0:
        raise InvalidConfigError("failure count cannot be negative")
    if success:
        return MODE_LOCAL
    if mode == MODE_LOCAL and failures < limit:
        return MODE_LOCAL
    return MODE_GLOBAL


class Pipeline:
    """Sequential frame processor; owns the mode, the track, and the timers.

    Either backend may be None: without an appearance detector the
    motion path carries every frame, and without a patch classifier
    motion candidates are accepted as-is.
    """

    def __init__(
        self,
        detector: AppearanceDetector | None = None,
        classifier: PatchClassifier | None = None,
        config: PipelineConfig = PipelineConfig(),
    ):
        self.config = config
        self.detector = detector
        self.classifier = classifier
        self.motion_detector = MotionDetector(
            alignment=config.alignment,
            segmentation=config.segmentation,
            motion=config.motion,
        )
        self.model = KalmanModel(config.kalman)
        self.mode = MODE_GLOBAL
        self.track: TrackState | None = None
        self._prev_frame: Frame | None = None
        self._prev_gray: GrayImage | None = None

    # ----- helpers -------------------------------------------------

    def _confirm_motion(
        self, frame: Frame, detections: tuple[Detection, ...]
    ) -> list[Detection]:
        """Run motion candidates through the patch classifier, if any."""
        if self.classifier is None:
            return list(detections)
        confirmed = []
        for det in detections:
            patch = extract_patch(frame, det.box)
            if patch is None:
                continue
            label, score = self.classifier.classify(patch)
            if label == LABEL_MAV:
                confirmed.append(
                    Detection(box=det.box, confidence=score, source=det.source)
                )
        return confirmed

    def _appearance(
        self, frame: Frame, view: ImageView, threshold: float, source: str
    ) -> list[Detection]:
        assert self.detector is not None
        found = self.detector.detect(view, threshold, source)
        ox, oy = view.origin
        out = []
        for det in found:
            moved = det.translated(ox, oy)
            clipped = moved.box.clipped(frame.width, frame.height)
            if clipped is None:
                continue
            out.append(Detection(box=clipped, confidence=moved.confidence, source=source))
        return out

    def _backend_degraded(self) -> bool:
        degraded = False
        if self.detector is not None:
            degraded = degraded or self.detector.degraded
        if self.classifier is not None:
            degraded = degraded or self.classifier.degraded
        return degraded

    # ----- frame loop ----------------------------------------------

    def process_frame(self, frame: Frame) -> FrameResult:
        """Advance the pipeline by one frame."""
        gray = to_grayscale(frame)
        timings = {tag: 0.0 for tag in _MODULE_TAGS}
        modules: list[str] = []
        mode = self.mode
        if mode == MODE_LOCAL and self.track is None:
            mode = MODE_GLOBAL

        if mode == MODE_GLOBAL:
            result = self._global_step(frame, gray, timings, modules)
        else:
            result = self._local_step(frame, gray, timings, modules)

        self._prev_frame = frame
        self._prev_gray = gray
        self.mode = result.mode_after
        return result

    def _global_step(self, frame, gray, timings, modules) -> FrameResult:
        detection: Detection | None = None
        if self.detector is not None:
            start = time.perf_counter()
            found = self._appearance(
                frame,
                ImageView.of_frame(frame),
                self.config.detector.global_threshold,
                SOURCE_GLOBAL_APPEARANCE,
            )
            timings[SOURCE_GLOBAL_APPEARANCE] = (time.perf_counter() - start) * 1e3
            modules.append(SOURCE_GLOBAL_APPEARANCE)
            detection = select_target(found)

        if detection is None and self._prev_gray is not None:
            start = time.perf_counter()
            motion = self.motion_detector.detect(
                self._prev_gray, gray, SOURCE_GLOBAL_MOTION
            )
            confirmed = self._confirm_motion(frame, motion.detections)
            timings[SOURCE_GLOBAL_MOTION] = (time.perf_counter() - start) * 1e3
            modules.append(SOURCE_GLOBAL_MOTION)
            detection = select_target(confirmed)

        success = detection is not None
        if success:
            self.track = init_track(
                detection.box.center, detection.box, self.config.kalman
            )
        mode_after = switch_mode(MODE_GLOBAL, success, 0, self.config.lost_limit)
        return FrameResult(
            index=frame.index,
            mode=MODE_GLOBAL,
            detection=detection,
            region=None,
            modules_run=tuple(modules),
            latency_ms=timings,
            mode_after=mode_after,
            degraded=self._backend_degraded(),
        )

    def _local_step(self, frame, gray, timings, modules) -> FrameResult:
        track = self.track
        assert track is not None
        failures_before = track.lost_count
        predicted_track, predicted_velocity = kf_predict(track, self.model)
        center_guess = predict_center(
            track.last_center,
            Homography.identity(),
            (float(predicted_velocity[0]), float(predicted_velocity[1])),
        )
        region = search_region(
            center_guess,
            failures_before,
            frame.width,
            frame.height,
            self.config.region_base,
            self.config.region_growth,
        )

        detection: Detection | None = None
        if self.detector is not None:
            start = time.perf_counter()
            found = self._appearance(
                frame,
                ImageView.of_window(frame, region),
                self.config.detector.local_threshold,
                SOURCE_LOCAL_APPEARANCE,
            )
            timings[SOURCE_LOCAL_APPEARANCE] = (time.perf_counter() - start) * 1e3
            modules.append(SOURCE_LOCAL_APPEARANCE)
            detection = select_target(found, center_guess, track.last_box)

        homography: Homography | None = None
        if detection is None and self._prev_gray is not None:
            start = time.perf_counter()
            rx, ry, rw, rh = region.pixel_rect()
            prev_crop = GrayImage(self._prev_gray.data[ry : ry + rh, rx : rx + rw])
            cur_crop = GrayImage(gray.data[ry : ry + rh, rx : rx + rw])
            motion = self.motion_detector.detect(
                prev_crop, cur_crop, SOURCE_LOCAL_MOTION, origin=(float(rx), float(ry))
            )
            confirmed = self._confirm_motion(frame, motion.detections)
            timings[SOURCE_LOCAL_MOTION] = (time.perf_counter() - start) * 1e3
            modules.append(SOURCE_LOCAL_MOTION)
            homography = motion.homography.with_origin_shift(float(rx), float(ry))
            detection = select_target(confirmed, center_guess, track.last_box)

        camera = homography if homography is not None else Homography.identity()
        if detection is not None:
            measured = measure_velocity(
                track.last_center, detection.box.center, camera
            )
            updated = kf_update(predicted_track, self.model, measured)
            self.track = TrackState(
                state=updated.state,
                covariance=updated.covariance,
                last_center=detection.box.center,
                last_box=detection.box,
                lost_count=updated.lost_count,
                primed=updated.primed,
            )
            success = True
        else:
            missed = kf_update(predicted_track, self.model, None)
            drifted = predict_center(
                track.last_center,
                camera,
                (float(predicted_velocity[0]), float(predicted_velocity[1])),
            )
            self.track = TrackState(
                state=missed.state,
                covariance=missed.covariance,
                last_center=drifted,
                last_box=track.last_box,
                lost_count=missed.lost_count,
                primed=missed.primed,
            )
            success = False

        mode_after = switch_mode(
            MODE_LOCAL, success, failures_before, self.config.lost_limit
        )
        if mode_after == MODE_GLOBAL:
            self.track = None
        return FrameResult(
            index=frame.index,
            mode=MODE_LOCAL,
            detection=detection,
            region=region,
            modules_run=tuple(modules),
            latency_ms=timings,
            mode_after=mode_after,
            degraded=self._backend_degraded(),
        )

    def close(self) -> None:
        for backend in (self.detector, self.classifier):
            if backend is not None:
                backend.close()
