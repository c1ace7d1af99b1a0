"""Synthetic scene generator with exact ground truth.

Every sequence is rendered from a fixed procedural canvas through a
per-frame analytic camera transform, with an optional small target
composited on top. Because the camera transform and the target
trajectory are chosen first and the pixels derived from them, the
generator can report the true inter-frame homography, target box,
center, and velocity for every frame, giving the rest of the system an
exact reference to test against.

The renderer samples the canvas with its own bilinear interpolation so
the reference imagery does not depend on the same resampling code the
pipeline under test uses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np

from .errors import InvalidConfigError
from .geometry import BBox, Frame
from .motioncomp import Homography

__all__ = [
    "CameraPath",
    "TargetPath",
    "DistractorConfig",
    "SceneConfig",
    "SceneTruth",
    "scene_truth",
    "render_scene",
    "generate_scene",
    "write_sequence",
    "read_truth",
    "preset_scene",
    "PRESET_NAMES",
]

_BACKGROUNDS = ("noise", "checker", "gradient", "flat")
_SHAPES = ("disc", "quad")

# The procedural canvas keeps its values inside this range so a global
# brightness offset of up to +-40 never clips.
_CANVAS_LOW = 40.0
_CANVAS_HIGH = 215.0
_CANVAS_PAD = 8.0


@dataclass(frozen=True)
class CameraPath:
    """Smooth parametric camera motion.

    Translation is a linear drift plus a sinusoidal pan; rotation, zoom
    and perspective tilt oscillate about zero. All motion is expressed
    as the transform taking frame coordinates into canvas coordinates
    at frame n.
    """

    drift: tuple[float, float] = (0.0, 0.0)
    pan_amplitude: tuple[float, float] = (0.0, 0.0)
    pan_period: float = 60.0
    rotation_amplitude: float = 0.0
    rotation_period: float = 80.0
    zoom_amplitude: float = 0.0
    zoom_period: float = 100.0
    tilt_amplitude: float = 0.0
    tilt_period: float = 90.0

    def __post_init__(self) -> None:
        for period in (
            self.pan_period,
            self.rotation_period,
            self.zoom_period,
            self.tilt_period,
        ):
            if period <= 0:
                raise InvalidConfigError("camera periods must be positive")
        if abs(self.zoom_amplitude) >= 0.5:
            raise InvalidConfigError("zoom amplitude too large to stay invertible")

    def matrix_at(self, n: int, width: int, height: int) -> np.ndarray:
        """Frame-to-canvas transform at frame n, before any canvas offset."""
        tx = self.drift[0] * n + self.pan_amplitude[0] * math.sin(
            2.0 * math.pi * n / self.pan_period
        )
        ty = self.drift[1] * n + self.pan_amplitude[1] * math.sin(
            2.0 * math.pi * n / self.pan_period + math.pi / 2.0
        )
        theta = math.radians(
            self.rotation_amplitude * math.sin(2.0 * math.pi * n / self.rotation_period)
        )
        scale = 1.0 + self.zoom_amplitude * math.sin(2.0 * math.pi * n / self.zoom_period)
        gx = self.tilt_amplitude * math.sin(2.0 * math.pi * n / self.tilt_period)
        gy = self.tilt_amplitude * math.cos(2.0 * math.pi * n / self.tilt_period)
        cx = (width - 1) / 2.0
        cy = (height - 1) / 2.0
        cos_t = math.cos(theta) * scale
        sin_t = math.sin(theta) * scale
        core = np.array(
            [
                [cos_t, -sin_t, 0.0],
                [sin_t, cos_t, 0.0],
                [gx, gy, 1.0],
            ]
        )
        to_center = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
        back = np.array([[1.0, 0.0, cx + tx], [0.0, 1.0, cy + ty], [0.0, 0.0, 1.0]])
        return back @ core @ to_center


@dataclass(frozen=True)
class TargetPath:
    """One rendered moving body.

    `start` is the body's center in frame coordinates of frame 0;
    `velocity` is its motion across the scene (canvas pixels per
    frame), optionally with a perpendicular sinusoidal sway. `contrast`
    is the signed intensity offset against the local background.
    Frames listed in hidden_frames skip rendering (simulated occlusion)
    but the trajectory continues underneath.
    """

    shape: str = "disc"
    size: float = 12.0
    start: tuple[float, float] = (100.0, 100.0)
    velocity: tuple[float, float] = (3.0, 0.0)
    contrast: float = 90.0
    sway_amplitude: float = 0.0
    sway_period: float = 40.0
    angle: float = 30.0
    hidden_frames: frozenset = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.shape not in _SHAPES:
            raise InvalidConfigError(f"unknown target shape {self.shape!r}")
        if self.size < 2:
            raise InvalidConfigError("target size must be >= 2 px")
        if self.sway_period <= 0:
            raise InvalidConfigError("sway period must be positive")
        object.__setattr__(self, "hidden_frames", frozenset(self.hidden_frames))


@dataclass(frozen=True)
class DistractorConfig:
    """Non-target structures that should NOT be detected as the target."""

    mover: TargetPath | None = None
    flicker_count: int = 0
    flicker_size: int = 6
    flicker_amplitude: float = 25.0

    def __post_init__(self) -> None:
        if self.flicker_count < 0:
            raise InvalidConfigError("flicker count must be >= 0")
        if self.flicker_size < 2:
            raise InvalidConfigError("flicker size must be >= 2")


@dataclass(frozen=True)
class SceneConfig:
    """Complete description of one synthetic sequence."""

    frames: int
    width: int = 640
    height: int = 360
    seed: int = 0
    background: str = "noise"
    texture_amplitude: float = 28.0
    texture_scale: float = 5.0
    camera: CameraPath = field(default_factory=CameraPath)
    target: TargetPath | None = None
    brightness_amplitude: float = 0.0
    brightness_period: float = 0.0
    distractors: DistractorConfig | None = None
    allow_border: bool = False

    def __post_init__(self) -> None:
        if self.frames < 1:
            raise InvalidConfigError("need at least one frame")
        if self.width < 16 or self.height < 16:
            raise InvalidConfigError("frame must be at least 16x16")
        if self.background not in _BACKGROUNDS:
            raise InvalidConfigError(f"unknown background {self.background!r}")
        if self.texture_amplitude < 0 or self.texture_scale <= 0:
            raise InvalidConfigError("texture parameters out of range")
        if abs(self.brightness_amplitude) > 40:
            raise InvalidConfigError("brightness drift beyond +-40 would clip")


@dataclass(frozen=True)
class SceneTruth:
    """Exact per-frame reference values for one generated sequence.

    homographies[k] carries points of frame k into frame k+1.
    boxes[k] is None when no target is configured or it is hidden;
    centers continue through hidden frames because the trajectory does.
    velocities are exact finite differences of consecutive centers,
    with velocity zero on the first frame.
    """

    width: int
    height: int
    boxes: tuple
    centers: tuple
    velocities: tuple
    homographies: tuple

    def gt_boxes(self) -> dict[int, list[BBox]]:
        out: dict[int, list[BBox]] = {}
        for k, box in enumerate(self.boxes):
            if box is not None:
                out[k] = [box]
        return out


def _brightness_at(config: SceneConfig, n: int) -> float:
    if config.brightness_amplitude == 0:
        return 0.0
    period = config.brightness_period
    if period <= 0:
        period = max(float(config.frames), 2.0)
    return config.brightness_amplitude * math.sin(2.0 * math.pi * n / period)


def _camera_matrices(config: SceneConfig) -> tuple[list[np.ndarray], int, int]:
    """Frame-to-canvas transforms with the canvas offset folded in."""
    corners = np.array(
        [
            [0.0, 0.0, 1.0],
            [config.width - 1.0, 0.0, 1.0],
            [0.0, config.height - 1.0, 1.0],
            [config.width - 1.0, config.height - 1.0, 1.0],
        ]
    )
    raw = [
        config.camera.matrix_at(n, config.width, config.height)
        for n in range(config.frames)
    ]
    lo = np.array([np.inf, np.inf])
    hi = np.array([-np.inf, -np.inf])
    for m in raw:
        proj = corners @ m.T
        pts = proj[:, :2] / proj[:, 2:3]
        lo = np.minimum(lo, pts.min(axis=0))
        hi = np.maximum(hi, pts.max(axis=0))
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise InvalidConfigError("camera path sends frame corners to infinity")
    offset = _CANVAS_PAD - lo
    canvas_w = int(math.ceil(hi[0] - lo[0] + 2 * _CANVAS_PAD)) + 2
    canvas_h = int(math.ceil(hi[1] - lo[1] + 2 * _CANVAS_PAD)) + 2
    shift = np.array(
        [[1.0, 0.0, offset[0]], [0.0, 1.0, offset[1]], [0.0, 0.0, 1.0]]
    )
    return [shift @ m for m in raw], canvas_w, canvas_h


def _make_canvas(config: SceneConfig, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Procedural background texture as float32 in the drift-safe range."""
    mid = (_CANVAS_LOW + _CANVAS_HIGH) / 2.0
    if config.background == "flat":
        return np.full((h, w), mid, dtype=np.float32)
    if config.background == "noise":
        base = np.zeros((h, w), dtype=np.float32)
        sigma = config.texture_scale
        for weight in (1.0, 2.0, 4.0):
            layer = rng.standard_normal((h, w)).astype(np.float32)
            layer = cv2.GaussianBlur(layer, (0, 0), sigma)
            base += weight * layer / max(layer.std(), 1e-6)
            sigma *= 3.0
        base = base / max(base.std(), 1e-6)
        canvas = mid + config.texture_amplitude * base
    elif config.background == "checker":
        tile = max(int(round(4 * config.texture_scale)), 4)
        ty = np.arange(h) // tile
        tx = np.arange(w) // tile
        parity = (ty[:, None] + tx[None, :]) % 2
        jitter = rng.uniform(-12.0, 12.0, size=(ty.max() + 1, tx.max() + 1)).astype(
            np.float32
        )
        canvas = np.where(
            parity == 0, mid - config.texture_amplitude, mid + config.texture_amplitude
        ).astype(np.float32)
        canvas = canvas + jitter[ty[:, None], tx[None, :]]
        canvas = cv2.GaussianBlur(canvas, (0, 0), 1.0)
    else:  # gradient with structures
        gy, gx = np.mgrid[0:h, 0:w].astype(np.float32)
        canvas = mid + config.texture_amplitude * (
            (gx / max(w - 1, 1)) + (gy / max(h - 1, 1)) - 1.0
        )
        for _ in range(60):
            bw = int(rng.integers(12, 60))
            bh = int(rng.integers(12, 60))
            x0 = int(rng.integers(0, max(w - bw, 1)))
            y0 = int(rng.integers(0, max(h - bh, 1)))
            canvas[y0 : y0 + bh, x0 : x0 + bw] += float(rng.uniform(-25.0, 25.0))
        canvas = cv2.GaussianBlur(canvas, (0, 0), 1.2)
    return np.clip(canvas, _CANVAS_LOW, _CANVAS_HIGH).astype(np.float32)


def _bilinear(canvas: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample the canvas at fractional coordinates (own resampler)."""
    h, w = canvas.shape
    if xs.min() < 0 or ys.min() < 0 or xs.max() > w - 1 or ys.max() > h - 1:
        raise InvalidConfigError("camera path samples outside the canvas")
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.minimum(x0, w - 2)
    y0 = np.minimum(y0, h - 2)
    fx = (xs - x0).astype(np.float32)
    fy = (ys - y0).astype(np.float32)
    c00 = canvas[y0, x0]
    c01 = canvas[y0, x0 + 1]
    c10 = canvas[y0 + 1, x0]
    c11 = canvas[y0 + 1, x0 + 1]
    top = c00 * (1.0 - fx) + c01 * fx
    bot = c10 * (1.0 - fx) + c11 * fx
    return top * (1.0 - fy) + bot * fy


def _apply_h(matrix: np.ndarray, point: tuple[float, float]) -> tuple[float, float]:
    v = matrix @ np.array([point[0], point[1], 1.0])
    return (float(v[0] / v[2]), float(v[1] / v[2]))


def _shape_mask(
    target: TargetPath, center: tuple[float, float], width: int, height: int
) -> tuple[np.ndarray, int, int]:
    """Rasterize the target silhouette near `center`.

    Returns a boolean window plus its top-left frame coordinates. Pixels
    belong to the shape when their integer coordinates satisfy the
    analytic inside test, so the same call defines both the rendered
    pixels and the ground-truth box.
    """
    cx, cy = center
    reach = int(math.ceil(target.size)) + 3
    x0 = max(int(math.floor(cx)) - reach, 0)
    y0 = max(int(math.floor(cy)) - reach, 0)
    x1 = min(int(math.ceil(cx)) + reach, width - 1)
    y1 = min(int(math.ceil(cy)) + reach, height - 1)
    if x1 < x0 or y1 < y0:
        return np.zeros((0, 0), dtype=bool), 0, 0
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dx = xs - cx
    dy = ys - cy
    if target.shape == "disc":
        r = target.size / 2.0
        mask = dx * dx + dy * dy <= r * r
    else:
        theta = math.radians(target.angle)
        u = dx * math.cos(theta) + dy * math.sin(theta)
        v = -dx * math.sin(theta) + dy * math.cos(theta)
        half = target.size / 2.0
        mask = (np.abs(u) <= half) & (np.abs(v) <= half)
    return mask, x0, y0


def _body_center(
    target: TargetPath,
    n: int,
    anchor: tuple[float, float],
    inv_matrix: np.ndarray,
) -> tuple[float, float]:
    """Frame-coordinate center of a body at frame n."""
    vx, vy = target.velocity
    px = anchor[0] + vx * n
    py = anchor[1] + vy * n
    if target.sway_amplitude:
        speed = math.hypot(vx, vy)
        if speed > 0:
            nx, ny = -vy / speed, vx / speed
        else:
            nx, ny = 0.0, 1.0
        off = target.sway_amplitude * math.sin(2.0 * math.pi * n / target.sway_period)
        px += off * nx
        py += off * ny
    return _apply_h(inv_matrix, (px, py))


def _mask_box(mask: np.ndarray, x0: int, y0: int) -> BBox | None:
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return None
    return BBox(
        float(x0 + xs.min()),
        float(y0 + ys.min()),
        float(xs.max() - xs.min() + 1),
        float(ys.max() - ys.min() + 1),
    )


def scene_truth(config: SceneConfig) -> SceneTruth:
    """Exact reference values; cheap, no pixel rendering involved."""
    matrices, _, _ = _camera_matrices(config)
    inverses = [np.linalg.inv(m) for m in matrices]
    homographies = tuple(
        Homography(inverses[n + 1] @ matrices[n]) for n in range(config.frames - 1)
    )
    boxes: list[BBox | None] = []
    centers: list[tuple[float, float] | None] = []
    if config.target is None:
        boxes = [None] * config.frames
        centers = [None] * config.frames
        velocities = [(0.0, 0.0)] * config.frames
    else:
        anchor = _apply_h(matrices[0], config.target.start)
        for n in range(config.frames):
            center = _body_center(config.target, n, anchor, inverses[n])
            centers.append(center)
            if n in config.target.hidden_frames:
                boxes.append(None)
                continue
            mask, x0, y0 = _shape_mask(
                config.target, center, config.width, config.height
            )
            box = _mask_box(mask, x0, y0)
            if box is None:
                raise InvalidConfigError(f"target left the frame at frame {n}")
            if not config.allow_border:
                margin = config.target.size
                if (
                    box.x < margin
                    or box.y < margin
                    or box.x2 > config.width - margin
                    or box.y2 > config.height - margin
                ):
                    raise InvalidConfigError(
                        f"target too close to the border at frame {n}"
                    )
            boxes.append(box)
        velocities = [(0.0, 0.0)]
        for n in range(1, config.frames):
            px, py = centers[n - 1]
            cx, cy = centers[n]
            velocities.append((cx - px, cy - py))
    return SceneTruth(
        width=config.width,
        height=config.height,
        boxes=tuple(boxes),
        centers=tuple(centers),
        velocities=tuple(velocities),
        homographies=homographies,
    )


def render_scene(config: SceneConfig):
    """Yield the frames of a sequence one at a time."""
    rng = np.random.default_rng(config.seed)
    matrices, canvas_w, canvas_h = _camera_matrices(config)
    inverses = [np.linalg.inv(m) for m in matrices]
    canvas = _make_canvas(config, rng, canvas_h, canvas_w)

    flicker_anchors: list[tuple[float, float]] = []
    if config.distractors is not None and config.distractors.flicker_count > 0:
        for _ in range(config.distractors.flicker_count):
            fx = float(rng.uniform(24.0, config.width - 24.0))
            fy = float(rng.uniform(24.0, config.height - 24.0))
            flicker_anchors.append(_apply_h(matrices[0], (fx, fy)))

    bodies: list[tuple[TargetPath, tuple[float, float]]] = []
    if config.target is not None:
        bodies.append((config.target, _apply_h(matrices[0], config.target.start)))
    if config.distractors is not None and config.distractors.mover is not None:
        mover = config.distractors.mover
        bodies.append((mover, _apply_h(matrices[0], mover.start)))

    gy, gx = np.mgrid[0 : config.height, 0 : config.width].astype(np.float64)
    ones = np.ones_like(gx)
    grid = np.stack([gx, gy, ones])

    for n in range(config.frames):
        proj = np.tensordot(matrices[n], grid, axes=1)
        qx = proj[0] / proj[2]
        qy = proj[1] / proj[2]
        image = _bilinear(canvas, qx, qy)

        for body, anchor in bodies:
            if n in body.hidden_frames:
                continue
            center = _body_center(body, n, anchor, inverses[n])
            mask, x0, y0 = _shape_mask(body, center, config.width, config.height)
            if mask.size == 0 or not mask.any():
                continue
            window = image[y0 : y0 + mask.shape[0], x0 : x0 + mask.shape[1]]
            value = float(np.clip(window.mean() + body.contrast, 0.0, 255.0))
            window[mask] = value

        if flicker_anchors and config.distractors is not None:
            amp = config.distractors.flicker_amplitude * (1.0 if n % 2 == 0 else -1.0)
            half = config.distractors.flicker_size // 2
            for anchor in flicker_anchors:
                fx, fy = _apply_h(inverses[n], anchor)
                x0 = int(round(fx)) - half
                y0 = int(round(fy)) - half
                x1 = min(x0 + config.distractors.flicker_size, config.width)
                y1 = min(y0 + config.distractors.flicker_size, config.height)
                x0 = max(x0, 0)
                y0 = max(y0, 0)
                if x1 <= x0 or y1 <= y0:
                    continue
                patch = image[y0:y1, x0:x1]
                patch[:] = np.clip(patch.mean() + amp, 0.0, 255.0)

        image = image + _brightness_at(config, n)
        gray = np.clip(np.rint(image), 0.0, 255.0).astype(np.uint8)
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
        yield Frame(index=n, rgb=rgb)


def generate_scene(config: SceneConfig) -> tuple[list[Frame], SceneTruth]:
    """Render the whole sequence and its ground truth."""
    return list(render_scene(config)), scene_truth(config)


def write_sequence(path, frames, truth: SceneTruth) -> None:
    """Write frames as zero-padded PNGs plus gt.csv and truth.json."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        name = out / f"{frame.index:06d}.png"
        cv2.imwrite(str(name), cv2.cvtColor(frame.rgb, cv2.COLOR_RGB2BGR))
    lines = ["frame,x,y,w,h"]
    for k, box in enumerate(truth.boxes):
        if box is None:
            continue
        lines.append(f"{k},{box.x:g},{box.y:g},{box.w:g},{box.h:g}")
    (out / "gt.csv").write_text("\n".join(lines) + "\n")
    payload = {
        "width": truth.width,
        "height": truth.height,
        "frames": len(truth.boxes),
        "homographies": [h.matrix.reshape(-1).tolist() for h in truth.homographies],
        "centers": [list(c) if c is not None else None for c in truth.centers],
        "velocities": [list(v) for v in truth.velocities],
        "boxes": [
            [b.x, b.y, b.w, b.h] if b is not None else None for b in truth.boxes
        ],
    }
    (out / "truth.json").write_text(json.dumps(payload, indent=1))


def read_truth(path) -> SceneTruth:
    """Load a truth.json written by write_sequence."""
    payload = json.loads(Path(path).read_text())
    return SceneTruth(
        width=payload["width"],
        height=payload["height"],
        boxes=tuple(
            BBox(*b) if b is not None else None for b in payload["boxes"]
        ),
        centers=tuple(
            tuple(c) if c is not None else None for c in payload["centers"]
        ),
        velocities=tuple(tuple(v) for v in payload["velocities"]),
        homographies=tuple(
            Homography(np.array(h).reshape(3, 3)) for h in payload["homographies"]
        ),
    )


PRESET_NAMES = ("pan", "checker", "textureless", "drift", "clutter", "static")


def preset_scene(
    name: str,
    frames: int = 120,
    seed: int = 0,
    width: int = 640,
    height: int = 360,
) -> SceneConfig:
    """Ready-made scene configurations for tests and the CLI."""
    pan_camera = CameraPath(
        drift=(0.6, 0.25),
        pan_amplitude=(30.0, 18.0),
        pan_period=70.0,
        rotation_amplitude=0.8,
        rotation_period=90.0,
        zoom_amplitude=0.004,
        zoom_period=110.0,
    )
    target = TargetPath(
        shape="disc",
        size=13.0,
        start=(width * 0.28, height * 0.32),
        velocity=(3.4, 1.5),
        contrast=100.0,
    )
    if name == "pan":
        return SceneConfig(
            frames=frames,
            width=width,
            height=height,
            seed=seed,
            background="noise",
            camera=pan_camera,
            target=target,
        )
    if name == "checker":
        return SceneConfig(
            frames=frames,
            width=width,
            height=height,
            seed=seed,
            background="checker",
            camera=pan_camera,
            target=replace(target, shape="quad", size=11.0, contrast=-90.0),
        )
    if name == "textureless":
        return SceneConfig(
            frames=frames,
            width=width,
            height=height,
            seed=seed,
            background="flat",
            camera=CameraPath(drift=(1.2, 0.4)),
            target=replace(target, contrast=80.0),
        )
    if name == "drift":
        return SceneConfig(
            frames=frames,
            width=width,
            height=height,
            seed=seed,
            background="noise",
            camera=CameraPath(),
            target=None,
            brightness_amplitude=40.0,
        )
    if name == "clutter":
        mover = TargetPath(
            shape="quad",
            size=9.0,
            start=(width * 0.72, height * 0.68),
            velocity=(-2.2, -0.8),
            contrast=-85.0,
            angle=15.0,
        )
        return SceneConfig(
            frames=frames,
            width=width,
            height=height,
            seed=seed,
            background="noise",
            camera=pan_camera,
            target=target,
            distractors=DistractorConfig(
                mover=mover, flicker_count=3, flicker_size=6, flicker_amplitude=20.0
            ),
        )
    if name == "static":
        return SceneConfig(
            frames=frames,
            width=width,
            height=height,
            seed=seed,
            background="noise",
            camera=CameraPath(),
            target=replace(target, velocity=(0.0, 0.0)),
        )
    raise InvalidConfigError(f"unknown preset {name!r}")
