"""Target state estimation and adaptive search-region placement.

The tracked state is the target's velocity and acceleration in image
coordinates, driven by center displacements that have been corrected
for camera motion. Position itself is handled outside the filter: the
next search window is placed at the camera-compensated previous center
plus the filtered velocity, and grows with every consecutive miss.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidConfigError, NumericDegeneracyError
from .geometry import BBox, clamp_region
from .motioncomp import Homography

__all__ = [
    "KalmanParams",
    "KalmanModel",
    "TrackState",
    "init_track",
    "kf_predict",
    "kf_update",
    "measure_velocity",
    "predict_center",
    "search_region",
]


@dataclass(frozen=True)
class KalmanParams:
    """Scalar noise levels and the initial covariance scale."""

    process_noise: float = 0.01
    measurement_noise: float = 1.0
    initial_covariance: float = 10.0

    def __post_init__(self) -> None:
        if self.process_noise < 0 or self.measurement_noise <= 0:
            raise InvalidConfigError(
                "process noise must be >= 0 and measurement noise > 0"
            )
        if self.initial_covariance <= 0:
            raise InvalidConfigError("initial covariance must be positive")


class KalmanModel:
    """Constant-acceleration-increment model over (vx, vy, ax, ay).

    With a unit frame interval the transition adds each acceleration
    component into the matching velocity component and keeps the
    acceleration; the measurement picks out the velocity pair.
    """

    def __init__(self, params: KalmanParams = KalmanParams(), dt: float = 1.0):
        self.params = params
        self.transition = np.array(
            [
                [1.0, 0.0, dt, 0.0],
                [0.0, 1.0, 0.0, dt],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        self.measurement = np.array(
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
            ]
        )
        self.process_noise = params.process_noise * np.eye(4)
        self.measurement_noise = params.measurement_noise * np.eye(2)


@dataclass(frozen=True)
class TrackState:
    """Filter state plus the bookkeeping the pipeline needs between frames.

    `state` is (vx, vy, ax, ay); `covariance` its 4x4 uncertainty.
    `primed` records whether a first velocity measurement has been
    absorbed; until then the filter holds the zero vector. `lost_count`
    is the number of consecutive frames without a confirmed detection.
    """

    state: np.ndarray
    covariance: np.ndarray
    last_center: tuple[float, float]
    last_box: BBox | None
    lost_count: int = 0
    primed: bool = False

    def __post_init__(self) -> None:
        x = np.asarray(self.state, dtype=np.float64).reshape(4)
        p = np.asarray(self.covariance, dtype=np.float64).reshape(4, 4)
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "state", x)
        object.__setattr__(self, "covariance", p)
        if self.lost_count < 0:
            raise InvalidConfigError("lost count cannot be negative")

    @property
    def velocity(self) -> tuple[float, float]:
        return (float(self.state[0]), float(self.state[1]))


def init_track(
    center: tuple[float, float],
    box: BBox | None = None,
    params: KalmanParams = KalmanParams(),
) -> TrackState:
    """Fresh track at a detection: zero velocity, wide-open covariance."""
    return TrackState(
        state=np.zeros(4),
        covariance=params.initial_covariance * np.eye(4),
        last_center=(float(center[0]), float(center[1])),
        last_box=box,
        lost_count=0,
        primed=False,
    )


def kf_predict(state: TrackState, model: KalmanModel) -> tuple[TrackState, np.ndarray]:
    """Propagate one frame ahead; returns the new state and predicted measurement."""
    m = model.transition
    x = m @ state.state
    p = m @ state.covariance @ m.T + model.process_noise
    predicted = model.measurement @ x
    return replace(state, state=x, covariance=p), predicted


def kf_update(
    state: TrackState, model: KalmanModel, measurement: np.ndarray | None
) -> TrackState:
    """Absorb one velocity measurement, or record a miss.

    On a miss the predicted state is kept untouched and the lost counter
    grows. The first real measurement of a track seeds the velocity
    directly (accelerations stay zero); later ones go through the
    standard gain update with a Joseph-form covariance step so the
    covariance stays symmetric positive semidefinite.
    """
    if measurement is None:
        return replace(state, lost_count=state.lost_count + 1)
    z = np.asarray(measurement, dtype=np.float64).reshape(2)
    if not state.primed:
        seeded = np.array([z[0], z[1], 0.0, 0.0])
        return replace(state, state=seeded, lost_count=0, primed=True)
    h = model.measurement
    p = state.covariance
    innovation = z - h @ state.state
    s = h @ p @ h.T + model.measurement_noise
    if not np.isfinite(s).all() or abs(np.linalg.det(s)) < 1e-12:
        raise NumericDegeneracyError("innovation covariance is singular")
    gain = p @ h.T @ np.linalg.inv(s)
    x = state.state + gain @ innovation
    joseph = np.eye(4) - gain @ h
    p_new = joseph @ p @ joseph.T + gain @ model.measurement_noise @ gain.T
    return replace(state, state=x, covariance=p_new, lost_count=0)


def measure_velocity(
    prev_center: tuple[float, float],
    cur_center: tuple[float, float],
    homography: Homography,
) -> np.ndarray:
    """Camera-compensated center displacement between consecutive frames.

    The previous center is first carried into the current frame's
    coordinates so that camera motion does not masquerade as target
    velocity.
    """
    px, py = homography.apply_point(prev_center)
    return np.array([cur_center[0] - px, cur_center[1] - py])


def predict_center(
    prev_center: tuple[float, float],
    homography: Homography,
    velocity: tuple[float, float],
) -> tuple[float, float]:
    """Expected target center this frame: carried-over center plus velocity."""
    px, py = homography.apply_point(prev_center)
    return (px + float(velocity[0]), py + float(velocity[1]))


def search_region(
    predicted_center: tuple[float, float],
    lost_count: int,
    width: int,
    height: int,
    base_side: int = 300,
    growth: int = 4,
) -> BBox:
    """Square search window around the predicted center.

    The side grows linearly with consecutive misses so a drifting
    prediction still covers the target, and is capped at the image's
    smaller dimension. The window is translated to stay inside the
    image, never shrunk.
    """
    if lost_count < 0:
        raise InvalidConfigError("lost count cannot be negative")
    if base_side < 1 or growth < 0:
        raise InvalidConfigError("region parameters out of range")
    side = base_side + growth * lost_count
    return clamp_region(predicted_center, side, width, height)
