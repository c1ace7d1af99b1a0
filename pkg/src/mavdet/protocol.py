"""Client side of the external detector/classifier stdio protocol.

A backend is a child process that speaks newline-delimited JSON over
its standard streams: one handshake line when it starts, then one
response line per request. Requests are a JSON header line followed by
the raw RGB payload. The pipeline serializes requests per backend, so
response ids can only ever lag behind the request id; stale lines left
over from a timed-out request are discarded by id.

A request that fails (timeout, dead process, malformed reply) degrades
gracefully: the detector yields no detections and the classifier passes
candidates through, and the backend is flagged so the caller can report
degraded operation.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading

import numpy as np

from .appearance import (
    AppearanceDetector,
    Detection,
    ImageView,
    LABEL_CLUTTER,
    LABEL_MAV,
    PatchClassifier,
    PatchView,
)
from .errors import BackendUnavailableError
from .geometry import BBox

__all__ = [
    "PROTOCOL_VERSION",
    "DEFAULT_TIMEOUT",
    "encode_request",
    "ProcessDetector",
    "ProcessClassifier",
]

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 0.5
_HANDSHAKE_TIMEOUT = 10.0


def encode_request(request_id: int, pixels: np.ndarray) -> bytes:
    """Wire bytes for one request: header line plus raw RGB payload."""
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValueError("payload must be HxWx3 uint8")
    h, w = pixels.shape[:2]
    header = {
        "id": int(request_id),
        "width": int(w),
        "height": int(h),
        "bytes": int(w * h * 3),
    }
    line = json.dumps(header, separators=(",", ":")).encode("ascii") + b"\n"
    return line + np.ascontiguousarray(pixels).tobytes()


class _ProcessBackend:
    """Shared spawn/handshake/request plumbing for both backend kinds."""

    role = ""

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        if isinstance(command, str):
            command = shlex.split(command)
        self.timeout = timeout
        self._next_id = 1
        self._dead = False
        self._last_failed = False
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
            )
        except OSError as exc:
            raise BackendUnavailableError(f"cannot spawn backend: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._handshake()

    def _read_loop(self) -> None:
        stream = self._proc.stdout
        assert stream is not None
        for line in stream:
            self._lines.put(line)
        self._lines.put(None)

    def _handshake(self) -> None:
        try:
            line = self._lines.get(timeout=_HANDSHAKE_TIMEOUT)
        except queue.Empty:
            self.close()
            raise BackendUnavailableError("backend did not send a handshake")
        if line is None:
            self.close()
            raise BackendUnavailableError("backend exited before handshake")
        try:
            hello = json.loads(line)
        except ValueError as exc:
            self.close()
            raise BackendUnavailableError(f"bad handshake: {line!r}") from exc
        if hello.get("proto") != PROTOCOL_VERSION or hello.get("role") != self.role:
            self.close()
            raise BackendUnavailableError(
                f"handshake mismatch: wanted role {self.role!r}, got {hello!r}"
            )

    def _request(self, pixels: np.ndarray) -> dict | None:
        """One round trip; None when the backend could not answer in time."""
        with self._lock:
            if self._dead:
                return None
            request_id = self._next_id
            self._next_id += 1
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write(encode_request(request_id, pixels))
                self._proc.stdin.flush()
            except (OSError, ValueError):
                self._dead = True
                self._last_failed = True
                return None
            deadline = self.timeout
            while True:
                try:
                    line = self._lines.get(timeout=deadline)
                except queue.Empty:
                    self._last_failed = True
                    return None
                if line is None:
                    self._dead = True
                    self._last_failed = True
                    return None
                try:
                    reply = json.loads(line)
                except ValueError:
                    self._last_failed = True
                    return None
                got = reply.get("id")
                if got == request_id:
                    self._last_failed = False
                    return reply
                if isinstance(got, int) and got < request_id:
                    continue  # stale answer to a timed-out request
                self._last_failed = True
                return None

    @property
    def degraded(self) -> bool:
        return self._dead or self._last_failed

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        self._dead = True
        for stream in (proc.stdin, proc.stdout):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass
        if proc.poll() is None:
            proc.terminate()
            try:
                proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()


class ProcessDetector(_ProcessBackend, AppearanceDetector):
    """Appearance detector served by an external process."""

    role = "detector"

    def detect(self, view: ImageView, threshold: float, source: str) -> list[Detection]:
        reply = self._request(view.pixels)
        if reply is None or "error" in reply:
            if reply is not None:
                self._last_failed = True
            return []
        out: list[Detection] = []
        for raw in reply.get("dets", []):
            try:
                box = BBox(
                    float(raw["x"]), float(raw["y"]), float(raw["w"]), float(raw["h"])
                )
                conf = float(raw["conf"])
            except (KeyError, TypeError, ValueError):
                self._last_failed = True
                continue
            if not 0.0 <= conf <= 1.0 or conf < threshold:
                continue
            clipped = box.clipped(view.width, view.height)
            if clipped is None:
                continue
            out.append(Detection(box=clipped, confidence=conf, source=source))
        return out


class ProcessClassifier(_ProcessBackend, PatchClassifier):
    """Patch classifier served by an external process.

    An unanswerable request passes the candidate through as "mav" so a
    dying classifier cannot silently mute the motion path.
    """

    role = "classifier"

    def classify(self, patch: PatchView) -> tuple[str, float]:
        reply = self._request(patch.pixels)
        if reply is None or "error" in reply:
            if reply is not None:
                self._last_failed = True
            return LABEL_MAV, 1.0
        label = reply.get("label")
        score = reply.get("score")
        if label not in (LABEL_MAV, LABEL_CLUTTER) or not isinstance(
            score, (int, float)
        ):
            self._last_failed = True
            return LABEL_MAV, 1.0
        return str(label), float(score)
