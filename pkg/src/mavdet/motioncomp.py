"""Camera ego-motion estimation and frame alignment.

Consecutive frames are registered by tracking a fixed grid of key points
with pyramidal Lucas-Kanade optical flow, fitting a projective transform
to the tracked pairs with RANSAC, and resampling the earlier frame into
the coordinates of the later one. Pixels that fall outside the source
frame after warping are reported through a validity mask so that later
stages can ignore them.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import (
    DegenerateConfigurationError,
    DimensionMismatchError,
    EmptyMatchSetError,
    InsufficientMatchesError,
    InvalidConfigError,
    InvalidDimensionsError,
)
from .geometry import BinaryMask, GrayImage

__all__ = [
    "AlignmentConfig",
    "KeypointMatch",
    "Homography",
    "AlignmentResult",
    "sample_grid_keypoints",
    "track_keypoints",
    "estimate_homography",
    "reprojection_inliers",
    "warp_frame",
    "background_motion_term",
    "align_frames",
]


@dataclass(frozen=True)
class AlignmentConfig:
    """Parameters of the grid tracker and the RANSAC model fit."""

    grid_cols: int = 30
    grid_rows: int = 20
    pyramid_levels: int = 3
    window: int = 21
    max_iterations: int = 30
    epsilon: float = 0.01
    fb_error: float = 1.0
    min_eig: float = 1e-4
    ransac_threshold: float = 3.0
    ransac_confidence: float = 0.995
    ransac_max_iters: int = 2000
    min_matches: int = 8

    def __post_init__(self) -> None:
        if self.grid_cols < 1 or self.grid_rows < 1:
            raise InvalidConfigError("grid must have at least one row and column")
        if self.pyramid_levels < 1:
            raise InvalidConfigError("pyramid needs at least one level")
        if self.window < 3 or self.window % 2 == 0:
            raise InvalidConfigError("tracker window must be odd and >= 3")
        if self.min_matches < 4:
            raise InvalidConfigError("a projective fit needs at least 4 matches")
        if not 0 < self.ransac_confidence < 1:
            raise InvalidConfigError("ransac confidence must be in (0, 1)")


@dataclass(frozen=True)
class KeypointMatch:
    """One grid point and where the tracker found it in the next frame."""

    prev: tuple[float, float]
    cur: tuple[float, float]
    tracked: bool


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so the bottom-right entry is 1."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise InvalidDimensionsError(f"homography must be 3x3, got {m.shape}")
        scale = m[2, 2]
        if not np.isfinite(m).all() or abs(scale) < 1e-12:
            raise DegenerateConfigurationError("homography is not normalizable")
        m = m / scale
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = dx
        m[1, 2] = dy
        return cls(m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of points through the transform."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        ones = np.ones((pts.shape[0], 1))
        proj = np.hstack([pts, ones]) @ self.matrix.T
        out = proj[:, :2] / proj[:, 2:3]
        return out[0] if single else out

    def apply_point(self, point: tuple[float, float]) -> tuple[float, float]:
        x, y = self.apply(np.asarray(point, dtype=np.float64))
        return float(x), float(y)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def compose(self, other: "Homography") -> "Homography":
        """Transform equal to applying `other` first, then this one."""
        return Homography(self.matrix @ other.matrix)

    def with_origin_shift(self, dx: float, dy: float) -> "Homography":
        """The same transform expressed in coordinates shifted by (dx, dy).

        Useful to lift a transform estimated inside a subwindow back to
        full-frame coordinates.
        """
        t = np.eye(3)
        t[0, 2] = dx
        t[1, 2] = dy
        t_inv = np.eye(3)
        t_inv[0, 2] = -dx
        t_inv[1, 2] = -dy
        return Homography(t @ self.matrix @ t_inv)


@dataclass(frozen=True)
class AlignmentResult:
    """Everything the alignment stage produces for one frame pair."""

    homography: Homography
    warped: GrayImage
    valid: BinaryMask
    matches: tuple[KeypointMatch, ...]
    inliers: tuple[KeypointMatch, ...]
    fallback: bool
    background_motion: float


def sample_grid_keypoints(
    width: int, height: int, cols: int = 30, rows: int = 20
) -> np.ndarray:
    """Cell-centre points of a uniform cols x rows grid, as an (N, 2) array.

    Points are ordered row by row, x varying fastest.
    """
    if width < 1 or height < 1:
        raise InvalidDimensionsError(f"image must be positive, got {width}x{height}")
    if cols < 1 or rows < 1:
        raise InvalidDimensionsError(f"grid must be positive, got {cols}x{rows}")
    xs = (np.arange(cols, dtype=np.float64) + 0.5) * (width / cols)
    ys = (np.arange(rows, dtype=np.float64) + 0.5) * (height / rows)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def track_keypoints(
    prev: GrayImage,
    cur: GrayImage,
    points: np.ndarray,
    config: AlignmentConfig = AlignmentConfig(),
) -> list[KeypointMatch]:
    """Track points from `prev` into `cur` with a forward-backward check.

    A point survives only if the tracker reports success in both
    directions, the round trip lands within `config.fb_error` pixels of
    the start, and the forward position is inside the image. Points the
    tracker cannot localize (for example on constant images) come back
    with tracked=False rather than raising.
    """
    if prev.data.shape != cur.data.shape:
        raise DimensionMismatchError(
            f"frame shapes differ: {prev.data.shape} vs {cur.data.shape}"
        )
    pts = np.asarray(points, dtype=np.float32).reshape(-1, 1, 2)
    if pts.shape[0] == 0:
        return []
    lk = dict(
        winSize=(config.window, config.window),
        maxLevel=config.pyramid_levels - 1,
        criteria=(
            cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT,
            config.max_iterations,
            config.epsilon,
        ),
        flags=cv2.OPTFLOW_LK_GET_MIN_EIGENVALS,
        minEigThreshold=config.min_eig,
    )
    fwd, st_f, _ = cv2.calcOpticalFlowPyrLK(prev.data, cur.data, pts, None, **lk)
    bwd, st_b, _ = cv2.calcOpticalFlowPyrLK(cur.data, prev.data, fwd, None, **lk)
    rt = np.linalg.norm((bwd - pts).reshape(-1, 2), axis=1)
    h, w = cur.data.shape
    fx = fwd[:, 0, 0]
    fy = fwd[:, 0, 1]
    inside = (fx >= 0) & (fx <= w - 1) & (fy >= 0) & (fy <= h - 1)
    ok = (st_f.ravel() == 1) & (st_b.ravel() == 1) & (rt <= config.fb_error) & inside
    out: list[KeypointMatch] = []
    for i in range(pts.shape[0]):
        out.append(
            KeypointMatch(
                prev=(float(pts[i, 0, 0]), float(pts[i, 0, 1])),
                cur=(float(fwd[i, 0, 0]), float(fwd[i, 0, 1])),
                tracked=bool(ok[i]),
            )
        )
    return out


def _tracked_arrays(matches) -> tuple[np.ndarray, np.ndarray]:
    tracked = [m for m in matches if m.tracked]
    src = np.asarray([m.prev for m in tracked], dtype=np.float64).reshape(-1, 2)
    dst = np.asarray([m.cur for m in tracked], dtype=np.float64).reshape(-1, 2)
    return src, dst


def estimate_homography(
    matches, config: AlignmentConfig = AlignmentConfig()
) -> Homography:
    """RANSAC projective fit mapping previous-frame points onto current ones."""
    src, dst = _tracked_arrays(matches)
    if src.shape[0] < config.min_matches:
        raise InsufficientMatchesError(
            f"need at least {config.min_matches} tracked matches, got {src.shape[0]}"
        )
    m, _ = cv2.findHomography(
        src,
        dst,
        method=cv2.RANSAC,
        ransacReprojThreshold=config.ransac_threshold,
        maxIters=config.ransac_max_iters,
        confidence=config.ransac_confidence,
    )
    if m is None or not np.isfinite(m).all() or abs(m[2, 2]) < 1e-12:
        raise DegenerateConfigurationError("point pairs do not constrain a transform")
    return Homography(m)


def reprojection_inliers(
    matches, homography: Homography, threshold: float = 3.0
) -> list[KeypointMatch]:
    """Tracked matches whose reprojection error under H is within threshold."""
    out = []
    for m in matches:
        if not m.tracked:
            continue
        px, py = homography.apply_point(m.prev)
        err = float(np.hypot(px - m.cur[0], py - m.cur[1]))
        if err <= threshold:
            out.append(m)
    return out


def warp_frame(prev: GrayImage, homography: Homography) -> tuple[GrayImage, BinaryMask]:
    """Resample `prev` into current-frame coordinates.

    Returns the warped image and a validity mask. A destination pixel is
    valid only when its entire bilinear footprint lies inside the source
    frame; everything else is sentinel territory and must not be
    interpreted as image content.
    """
    h, w = prev.data.shape
    m = homography.matrix
    warped = cv2.warpPerspective(
        prev.data,
        m,
        (w, h),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )
    coverage = cv2.warpPerspective(
        np.full((h, w), 255, dtype=np.uint8),
        m,
        (w, h),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )
    valid = np.where(coverage == 255, np.uint8(255), np.uint8(0))
    return GrayImage(warped), BinaryMask(valid)


def background_motion_term(matches, homography: Homography) -> float:
    """Mean distance between tracked points and their model prediction.

    This measures how much apparent background motion the projective
    model failed to explain; it feeds the adaptive segmentation
    threshold.
    """
    src, dst = _tracked_arrays(matches)
    if src.shape[0] == 0:
        raise EmptyMatchSetError("no tracked matches to measure")
    proj = homography.apply(src)
    return float(np.mean(np.linalg.norm(dst - proj, axis=1)))


def align_frames(
    prev: GrayImage,
    cur: GrayImage,
    config: AlignmentConfig = AlignmentConfig(),
) -> AlignmentResult:
    """Full alignment step for one frame pair.

    Tracks the key-point grid, fits the transform, and warps the
    previous frame. When the fit is impossible (too few tracked points,
    degenerate geometry) the identity transform is used instead and the
    result is flagged as a fallback. The background-motion statistic is
    averaged over the fit's inliers, or over all tracked matches in the
    fallback case, and is zero when nothing was tracked.

    The tracker assumes brightness constancy, so when the two frames
    differ by a global exposure step the flow it reports is biased; a
    static scene then comes back with a phantom sub-pixel translation.
    To avoid that, tracking runs against an exposure-equalized copy of
    the current frame whenever the mean levels differ by a full gray
    level. Only the tracking input is adjusted; the warped output keeps
    the original intensities.
    """
    grid = sample_grid_keypoints(
        cur.width, cur.height, config.grid_cols, config.grid_rows
    )
    offset = float(cur.data.mean()) - float(prev.data.mean())
    track_cur = cur
    if abs(offset) >= 1.0:
        equalized = np.clip(
            cur.data.astype(np.int16) - int(round(offset)), 0, 255
        )
        track_cur = GrayImage(equalized.astype(np.uint8))
    matches = track_keypoints(prev, track_cur, grid, config)
    fallback = False
    try:
        homography = estimate_homography(matches, config)
    except (InsufficientMatchesError, DegenerateConfigurationError):
        homography = Homography.identity()
        fallback = True
    inliers = reprojection_inliers(matches, homography, config.ransac_threshold)
    if fallback or not inliers:
        basis = [m for m in matches if m.tracked]
    else:
        basis = inliers
    if basis:
        background = background_motion_term(basis, homography)
    else:
        background = 0.0
    warped, valid = warp_frame(prev, homography)
    return AlignmentResult(
        homography=homography,
        warped=warped,
        valid=valid,
        matches=tuple(matches),
        inliers=tuple(inliers),
        fallback=fallback,
        background_motion=background,
    )
