"""Model loading and the built-in stubs.

A detector takes the letterboxed square and returns boxes in that
square's pixel coordinates with confidences; a classifier takes a fixed
32x32 patch and returns a label with a score. The stubs implement both
interfaces with cheap deterministic heuristics so the protocol and the
pipeline integration can be exercised without any weights. Real ONNX
models load through the same entry points when onnxruntime is around.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "StubDetector",
    "StubClassifier",
    "load_model",
    "PATCH_SIZE",
]

PATCH_SIZE = 32


class AdapterError(Exception):
    """Fatal setup problem; reported before the handshake."""


@dataclass(frozen=True)
class AdapterConfig:
    """Resolved command-line options for one serving process."""

    role: str
    model: str | None = None
    stub: bool = False
    input_size: int = 640
    conf_floor: float = 0.25

    def __post_init__(self) -> None:
        if self.role not in ("detector", "classifier"):
            raise AdapterError(f"unknown role {self.role!r}")
        if self.input_size < 32:
            raise AdapterError("model input side must be at least 32")
        if not 0.0 <= self.conf_floor < 1.0:
            raise AdapterError("confidence floor must be in [0, 1)")
        if not self.stub and self.model is None:
            raise AdapterError("either a model path or --stub is required")


class StubDetector:
    """Finds unusually bright compact regions of the content area.

    Stands in for the neural detector: same inputs, same outputs, no
    weights. The threshold adapts to the content statistics so the
    letterbox padding does not skew it.
    """

    def __init__(self, z_limit: float = 3.2, min_frac: float = 1.5e-4, max_boxes: int = 5):
        self.z_limit = z_limit
        self.min_frac = min_frac
        self.max_boxes = max_boxes

    def infer(
        self, square: np.ndarray, content: tuple[int, int, int, int]
    ) -> list[tuple[float, float, float, float, float]]:
        cx, cy, cw, ch = content
        gray = cv2.cvtColor(square, cv2.COLOR_RGB2GRAY)
        region = gray[cy : cy + ch, cx : cx + cw]
        mean = float(region.mean())
        std = float(region.std())
        if std < 1.0:
            return []
        mask = (region.astype(np.float32) - mean > self.z_limit * std).astype(np.uint8)
        count, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
        # single hot pixels balloon when the letterbox upscales, so the
        # area floor has to track the content size, not absolute pixels
        min_area = max(6.0, self.min_frac * cw * ch)
        boxes = []
        for k in range(1, count):
            x, y, w, h, area = stats[k]
            if area < min_area:
                continue
            patch = region[y : y + h, x : x + w]
            peak = float(patch.max())
            conf = min(0.99, 0.5 + (peak - mean) / 255.0)
            boxes.append((float(x + cx), float(y + cy), float(w), float(h), conf))
        boxes.sort(key=lambda b: b[2] * b[3], reverse=True)
        return boxes[: self.max_boxes]


class StubClassifier:
    """Accepts patches whose center outshines their border ring."""

    def __init__(self, contrast_limit: float = 25.0):
        self.contrast_limit = contrast_limit

    def infer(self, patch: np.ndarray) -> tuple[str, float]:
        gray = cv2.cvtColor(patch, cv2.COLOR_RGB2GRAY).astype(np.float32)
        q = PATCH_SIZE // 4
        center = float(gray[q:-q, q:-q].mean())
        ring = np.concatenate(
            [gray[:q].ravel(), gray[-q:].ravel(), gray[q:-q, :q].ravel(), gray[q:-q, -q:].ravel()]
        )
        contrast = center - float(ring.mean())
        score = min(0.99, max(0.01, 0.5 + contrast / 200.0))
        label = "mav" if contrast > self.contrast_limit else "clutter"
        return label, round(score, 4)


class OnnxDetector:
    """Thin wrapper over an ONNX detection head.

    Expects the common (N, 6) output layout of x1, y1, x2, y2, score,
    class on a normalized CHW float input.
    """

    def __init__(self, path: str, session_factory):
        self.session = session_factory(path)

    def infer(self, square, content):
        blob = square.astype(np.float32).transpose(2, 0, 1)[None] / 255.0
        name = self.session.get_inputs()[0].name
        rows = self.session.run(None, {name: blob})[0]
        rows = np.asarray(rows).reshape(-1, rows.shape[-1])
        out = []
        for row in rows:
            x1, y1, x2, y2, score = (float(v) for v in row[:5])
            out.append((x1, y1, x2 - x1, y2 - y1, score))
        return out


class OnnxClassifier:
    """Two-class patch head: index 0 clutter, index 1 mav."""

    def __init__(self, path: str, session_factory):
        self.session = session_factory(path)

    def infer(self, patch):
        blob = patch.astype(np.float32).transpose(2, 0, 1)[None] / 255.0
        name = self.session.get_inputs()[0].name
        logits = np.asarray(self.session.run(None, {name: blob})[0]).ravel()
        shifted = np.exp(logits - logits.max())
        probs = shifted / shifted.sum()
        mav = float(probs[1]) if probs.size > 1 else float(probs[0])
        label = "mav" if mav >= 0.5 else "clutter"
        return label, round(mav, 4)


def _onnx_session_factory():
    try:
        import onnxruntime
    except ImportError as exc:
        raise AdapterError(
            "onnxruntime is not installed; use --stub or install the onnx extra"
        ) from exc
    return lambda path: onnxruntime.InferenceSession(
        path, providers=["CPUExecutionProvider"]
    )


def load_model(config: AdapterConfig):
    """Build the inference object for the configured role."""
    if config.stub:
        return StubDetector() if config.role == "detector" else StubClassifier()
    if not os.path.isfile(config.model):
        raise AdapterError(f"model file not found: {config.model}")
    factory = _onnx_session_factory()
    if config.role == "detector":
        return OnnxDetector(config.model, factory)
    return OnnxClassifier(config.model, factory)
