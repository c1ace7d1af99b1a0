"""Square letterbox resize and the inverse box mapping.

The detector model eats a fixed square input. Frames keep their aspect
ratio: scale by the limiting side, center, and pad the rest with a
neutral gray. Boxes predicted on that square have to be mapped back to
the coordinates of the frame the pipeline actually sent.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

__all__ = ["LetterboxPlan", "plan_letterbox", "apply_letterbox", "box_to_source"]

PAD_VALUE = 114


@dataclass(frozen=True)
class LetterboxPlan:
    """Geometry of one source-to-square mapping."""

    src_w: int
    src_h: int
    size: int
    scale: float
    pad_x: int
    pad_y: int

    @property
    def content_w(self) -> int:
        return round(self.src_w * self.scale)

    @property
    def content_h(self) -> int:
        return round(self.src_h * self.scale)


def plan_letterbox(src_w: int, src_h: int, size: int) -> LetterboxPlan:
    if src_w < 1 or src_h < 1:
        raise ValueError(f"bad source size {src_w}x{src_h}")
    if size < 8:
        raise ValueError(f"model input side too small: {size}")
    scale = min(size / src_w, size / src_h)
    content_w = round(src_w * scale)
    content_h = round(src_h * scale)
    return LetterboxPlan(
        src_w=src_w,
        src_h=src_h,
        size=size,
        scale=scale,
        pad_x=(size - content_w) // 2,
        pad_y=(size - content_h) // 2,
    )


def apply_letterbox(image: np.ndarray, plan: LetterboxPlan) -> np.ndarray:
    """Resize into the square described by the plan, gray-padded."""
    if image.shape[:2] != (plan.src_h, plan.src_w):
        raise ValueError("image does not match the letterbox plan")
    resized = cv2.resize(
        image, (plan.content_w, plan.content_h), interpolation=cv2.INTER_LINEAR
    )
    canvas = np.full((plan.size, plan.size, 3), PAD_VALUE, dtype=np.uint8)
    canvas[
        plan.pad_y : plan.pad_y + plan.content_h,
        plan.pad_x : plan.pad_x + plan.content_w,
    ] = resized
    return canvas


def box_to_source(
    plan: LetterboxPlan, x: float, y: float, w: float, h: float
) -> tuple[float, float, float, float]:
    """Map a box from model-input coordinates back onto the source frame."""
    sx = (x - plan.pad_x) / plan.scale
    sy = (y - plan.pad_y) / plan.scale
    return sx, sy, w / plan.scale, h / plan.scale
