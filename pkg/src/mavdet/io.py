"""Sequence input, detection-log output, and annotation drawing.

Video decoding stays outside the package: a sequence is either a
directory of image files or a raw byte stream (one JSON header line,
then tightly packed RGB frames), so anything that can decode video can
pipe frames in.
"""

from __future__ import annotations

import json
import queue
import threading
from pathlib import Path

import cv2
import numpy as np

from .errors import EmptyInputError, InvalidConfigError
from .geometry import Frame
from .pipeline import FrameResult

__all__ = [
    "read_image_dir",
    "read_raw_stream",
    "JsonlWriter",
    "frame_result_to_json",
    "annotate_frame",
]

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")

# Box colors (BGR) by detection source: appearance detections follow the
# yellow convention, motion detections the blue one.
_APPEARANCE_COLOR = (0, 255, 255)
_MOTION_COLOR = (255, 0, 0)
_REGION_COLOR = (160, 160, 160)


def read_image_dir(path):
    """Yield frames from an image-sequence directory in name order."""
    root = Path(path)
    if not root.is_dir():
        raise InvalidConfigError(f"not a directory: {path}")
    names = sorted(
        p for p in root.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not names:
        raise EmptyInputError(f"no image files in {path}")
    for index, name in enumerate(names):
        bgr = cv2.imread(str(name), cv2.IMREAD_COLOR)
        if bgr is None:
            raise InvalidConfigError(f"unreadable image: {name}")
        yield Frame(index=index, rgb=cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))


def read_raw_stream(stream):
    """Yield frames from a raw stream: JSON header line, then RGB bytes.

    The header is {"width": W, "height": H, "frames": N} and is
    followed by exactly N tightly packed W*H*3 byte frames.
    """
    header_line = stream.readline()
    if not header_line:
        raise EmptyInputError("empty raw stream")
    try:
        header = json.loads(header_line)
        width = int(header["width"])
        height = int(header["height"])
        count = int(header["frames"])
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidConfigError(f"bad raw stream header: {header_line!r}") from exc
    if width < 1 or height < 1 or count < 0:
        raise InvalidConfigError("raw stream header out of range")
    if count == 0:
        raise EmptyInputError("raw stream declares zero frames")
    frame_bytes = width * height * 3
    for index in range(count):
        payload = stream.read(frame_bytes)
        if payload is None or len(payload) != frame_bytes:
            raise InvalidConfigError(f"raw stream truncated at frame {index}")
        rgb = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
        yield Frame(index=index, rgb=rgb)


class JsonlWriter:
    """Background JSON-lines writer with a bounded queue.

    Keeps slow disks from stalling the frame loop; close() drains the
    queue before returning so output is complete when the run ends.
    """

    def __init__(self, path, maxsize: int = 256):
        self._fh = open(path, "w", encoding="utf-8")
        self._queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self._thread = threading.Thread(target=self._drain, daemon=True)
        self._thread.start()

    def _drain(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                break
            self._fh.write(json.dumps(item, separators=(",", ":")) + "\n")
        self._fh.flush()

    def write(self, record: dict) -> None:
        self._queue.put(record)

    def close(self) -> None:
        self._queue.put(None)
        self._thread.join()
        self._fh.close()


def _box_json(box) -> dict:
    return {"x": box.x, "y": box.y, "w": box.w, "h": box.h}


def frame_result_to_json(result: FrameResult) -> dict:
    """The per-frame log record the run command emits."""
    det = None
    if result.detection is not None:
        det = _box_json(result.detection.box)
        det["conf"] = result.detection.confidence
        det["source"] = result.detection.source
    region = _box_json(result.region) if result.region is not None else None
    record = {
        "frame": result.index,
        "mode": result.mode,
        "det": det,
        "region": region,
        "ms": {k: round(v, 4) for k, v in result.latency_ms.items()},
    }
    if result.degraded:
        record["degraded"] = True
    return record


def annotate_frame(frame: Frame, result: FrameResult) -> np.ndarray:
    """BGR image with the detection box and search region drawn in."""
    canvas = cv2.cvtColor(frame.rgb, cv2.COLOR_RGB2BGR)
    if result.region is not None:
        x, y, w, h = result.region.pixel_rect()
        cv2.rectangle(canvas, (x, y), (x + w - 1, y + h - 1), _REGION_COLOR, 1)
    if result.detection is not None:
        det = result.detection
        color = _APPEARANCE_COLOR if det.source.endswith("AD") else _MOTION_COLOR
        x, y, w, h = det.box.pixel_rect()
        cv2.rectangle(canvas, (x, y), (x + w - 1, y + h - 1), color, 2)
        cv2.putText(
            canvas,
            det.source,
            (x, max(y - 4, 10)),
            cv2.FONT_HERSHEY_SIMPLEX,
            0.4,
            color,
            1,
            cv2.LINE_AA,
        )
    return canvas
