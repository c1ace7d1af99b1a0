"""The request loop: stdio in, stdio out, one reply per request.

Wire format, mirroring what the pipeline's client sends:

  handshake (us to them):  {"proto": 1, "role": "detector"}
  request header:          {"id": 7, "width": 640, "height": 360, "bytes": 691200}
  request payload:         exactly `bytes` of raw RGB24
  detector reply:          {"id": 7, "dets": [{"x","y","w","h","conf"}, ...]}
  classifier reply:        {"id": 7, "label": "mav", "score": 0.87}
  failure reply:           {"id": 7, "error": "why"}

The `bytes` field is trusted for framing (that is how the stream stays
in sync) and validated against width*height*3 for meaning. Responses
are written in request order with the id echoed exactly; the loop is
single threaded so reordering is impossible.
"""

from __future__ import annotations

import json
import sys

import cv2
import numpy as np

from .letterbox import apply_letterbox, box_to_source, plan_letterbox
from .models import PATCH_SIZE, AdapterConfig, load_model

__all__ = ["serve", "PROTOCOL_VERSION"]

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 64 * 1024 * 1024
_DRAIN_CHUNK = 1024 * 1024


def _send(stream, obj) -> None:
    stream.write((json.dumps(obj, separators=(",", ":")) + "\n").encode())
    stream.flush()


def _read_exact(stream, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            break
        buf.extend(chunk)
    return bytes(buf)


def _drain(stream, n: int) -> bool:
    """Discard n payload bytes; False when the stream ended early."""
    left = n
    while left > 0:
        chunk = stream.read(min(left, _DRAIN_CHUNK))
        if not chunk:
            return False
        left -= len(chunk)
    return True


def _detect(model, frame: np.ndarray, size: int, floor: float) -> list[dict]:
    h, w = frame.shape[:2]
    plan = plan_letterbox(w, h, size)
    square = apply_letterbox(frame, plan)
    content = (plan.pad_x, plan.pad_y, plan.content_w, plan.content_h)
    dets = []
    for bx, by, bw, bh, conf in model.infer(square, content):
        if conf < floor:
            continue
        sx, sy, sw, sh = box_to_source(plan, bx, by, bw, bh)
        sx2 = min(float(w), sx + sw)
        sy2 = min(float(h), sy + sh)
        sx = max(0.0, sx)
        sy = max(0.0, sy)
        if sx2 - sx < 2.0 or sy2 - sy < 2.0:
            continue  # smaller than anything the pipeline could use
        dets.append(
            {
                "x": round(sx, 2),
                "y": round(sy, 2),
                "w": round(sx2 - sx, 2),
                "h": round(sy2 - sy, 2),
                "conf": round(float(conf), 4),
            }
        )
    return dets


def _classify(model, patch: np.ndarray) -> tuple[str, float]:
    if patch.shape[:2] != (PATCH_SIZE, PATCH_SIZE):
        patch = cv2.resize(
            patch, (PATCH_SIZE, PATCH_SIZE), interpolation=cv2.INTER_LINEAR
        )
    label, score = model.infer(patch)
    return label, float(score)


def serve(config: AdapterConfig, stdin=None, stdout=None) -> int:
    """Load the model, shake hands, answer until stdin closes."""
    model = load_model(config)
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer

    _send(stdout, {"proto": PROTOCOL_VERSION, "role": config.role})
    while True:
        line = stdin.readline()
        if not line:
            return 0
        if not line.strip():
            continue
        try:
            meta = json.loads(line)
            if not isinstance(meta, dict):
                raise ValueError("header is not an object")
        except ValueError:
            _send(stdout, {"id": -1, "error": "unreadable request header"})
            continue

        rid = meta.get("id")
        if not isinstance(rid, int):
            rid = -1
        width = meta.get("width")
        height = meta.get("height")
        claimed = meta.get("bytes")
        if not isinstance(claimed, int) or claimed < 0:
            _send(stdout, {"id": rid, "error": "bad byte count"})
            continue

        valid_dims = (
            isinstance(width, int)
            and isinstance(height, int)
            and width >= 1
            and height >= 1
        )
        expected = width * height * 3 if valid_dims else -1
        if claimed != expected or claimed > MAX_PAYLOAD:
            # consume what the sender framed so the stream stays aligned
            if not _drain(stdin, claimed):
                _send(stdout, {"id": rid, "error": "payload ended early"})
                return 0
            _send(stdout, {"id": rid, "error": "payload does not match geometry"})
            continue

        payload = _read_exact(stdin, claimed)
        if len(payload) != claimed:
            _send(stdout, {"id": rid, "error": "payload ended early"})
            return 0
        image = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)

        try:
            if config.role == "detector":
                dets = _detect(model, image, config.input_size, config.conf_floor)
                _send(stdout, {"id": rid, "dets": dets})
            else:
                label, score = _classify(model, image)
                _send(stdout, {"id": rid, "label": label, "score": score})
        except Exception as exc:  # a model hiccup must not kill the stream
            _send(stdout, {"id": rid, "error": f"inference failed: {exc}"})
