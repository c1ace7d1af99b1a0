import json
import sys
from pathlib import Path

import numpy as np
import pytest

from mavdet.appearance import ImageView, PatchView
from mavdet.errors import BackendUnavailableError
from mavdet.geometry import BBox, Frame
from mavdet.protocol import (
    DEFAULT_TIMEOUT,
    PROTOCOL_VERSION,
    ProcessClassifier,
    ProcessDetector,
    encode_request,
)

BACKEND = str(Path(__file__).parent / "helpers" / "fake_backend.py")


def backend_cmd(mode, *extra):
    return [sys.executable, BACKEND, mode, *extra]


def frame_with_square(x=30, y=20, size=10, width=100, height=80):
    rgb = np.full((height, width, 3), 50, dtype=np.uint8)
    rgb[y : y + size, x : x + size] = 255
    return Frame(0, rgb)


@pytest.fixture
def detector(request):
    d = ProcessDetector(backend_cmd("detector"))
    request.addfinalizer(d.close)
    return d


class TestEncodeRequest:
    def test_header_then_payload(self):
        pixels = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
        data = encode_request(7, pixels)
        newline = data.index(b"\n")
        header = json.loads(data[:newline])
        assert header == {"id": 7, "width": 3, "height": 2, "bytes": 18}
        assert data[newline + 1 :] == pixels.tobytes()

    def test_rejects_bad_payload(self):
        with pytest.raises(ValueError):
            encode_request(1, np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            encode_request(1, np.zeros((4, 4, 3), dtype=np.float32))

    def test_defaults(self):
        assert PROTOCOL_VERSION == 1
        assert DEFAULT_TIMEOUT == 0.5


class TestHandshake:
    def test_wrong_role_rejected(self):
        with pytest.raises(BackendUnavailableError):
            ProcessDetector(backend_cmd("badhello"))

    def test_wrong_version_rejected(self):
        with pytest.raises(BackendUnavailableError):
            ProcessDetector(backend_cmd("oldproto"))

    def test_exit_before_handshake(self):
        with pytest.raises(BackendUnavailableError):
            ProcessDetector(backend_cmd("nohello"))

    def test_role_crosscheck(self):
        # a detector backend cannot serve as a classifier
        with pytest.raises(BackendUnavailableError):
            ProcessClassifier(backend_cmd("detector"))

    def test_unspawnable_command(self):
        with pytest.raises(BackendUnavailableError):
            ProcessDetector(["/no/such/binary/anywhere"])

    def test_string_command_is_split(self):
        d = ProcessDetector(f"{sys.executable} {BACKEND} detector")
        try:
            assert not d.degraded
        finally:
            d.close()


class TestDetector:
    def test_finds_bright_square(self, detector):
        view = ImageView.of_frame(frame_with_square(30, 20, 10))
        out = detector.detect(view, 0.5, "GAD")
        assert len(out) == 1
        assert out[0].box == BBox(30, 20, 10, 10)
        assert out[0].confidence == 0.9
        assert out[0].source == "GAD"
        assert not detector.degraded

    def test_empty_scene(self, detector):
        view = ImageView.of_frame(Frame(0, np.full((40, 60, 3), 30, dtype=np.uint8)))
        assert detector.detect(view, 0.5, "GAD") == []
        assert not detector.degraded

    def test_threshold_filters(self, detector):
        view = ImageView.of_frame(frame_with_square())
        assert detector.detect(view, 0.95, "GAD") == []

    def test_sequential_requests(self, detector):
        view = ImageView.of_frame(frame_with_square())
        for _ in range(5):
            assert len(detector.detect(view, 0.5, "GAD")) == 1

    def test_window_views_work(self, detector):
        f = frame_with_square(30, 20, 10)
        view = ImageView.of_window(f, BBox(25, 15, 30, 30))
        out = detector.detect(view, 0.5, "LAD")
        # the backend sees only the crop, so coordinates are view-local
        assert out[0].box == BBox(5, 5, 10, 10)

    def test_oversized_boxes_clipped(self):
        d = ProcessDetector(backend_cmd("oversize"))
        try:
            view = ImageView.of_frame(frame_with_square())
            out = d.detect(view, 0.5, "GAD")
            assert len(out) == 1
            assert out[0].box == BBox(0, 0, 100, 80)
        finally:
            d.close()


class TestFailureModes:
    def run_one(self, mode, timeout=DEFAULT_TIMEOUT):
        d = ProcessDetector(backend_cmd(mode), timeout=timeout)
        try:
            view = ImageView.of_frame(frame_with_square())
            return d.detect(view, 0.5, "GAD"), d.degraded
        finally:
            d.close()

    def test_error_reply(self):
        out, degraded = self.run_one("error")
        assert out == [] and degraded

    def test_garbage_reply(self):
        out, degraded = self.run_one("garbage")
        assert out == [] and degraded

    def test_future_id_is_failure(self):
        out, degraded = self.run_one("wrongid")
        assert out == [] and degraded

    def test_timeout(self):
        out, degraded = self.run_one("slow", timeout=0.2)
        assert out == [] and degraded

    def test_bad_fields_skipped(self):
        out, degraded = self.run_one("badfields")
        assert out == [] and degraded

    def test_stale_reply_discarded(self):
        d = ProcessDetector(backend_cmd("stale"), timeout=0.3)
        try:
            view = ImageView.of_frame(frame_with_square())
            first = d.detect(view, 0.5, "GAD")
            assert first == [] and d.degraded
            # the late answer to request 1 is skipped by id and request 2
            # completes normally, clearing the degraded flag
            second = d.detect(view, 0.5, "GAD")
            assert second == []
            assert not d.degraded
        finally:
            d.close()

    def test_dead_process_stays_dead(self):
        d = ProcessDetector(backend_cmd("die"))
        try:
            view = ImageView.of_frame(frame_with_square())
            assert len(d.detect(view, 0.5, "GAD")) == 1
            assert d.detect(view, 0.5, "GAD") == []
            assert d.degraded
            # further calls fail fast without touching the pipe
            assert d.detect(view, 0.5, "GAD") == []
        finally:
            d.close()

    def test_close_is_idempotent(self):
        d = ProcessDetector(backend_cmd("detector"))
        d.close()
        d.close()


class TestClassifier:
    def patch(self, value):
        return PatchView(
            pixels=np.full((32, 32, 3), value, dtype=np.uint8),
            frame_index=0,
            source_box=BBox(0, 0, 32, 32),
        )

    def test_labels_by_brightness(self):
        c = ProcessClassifier(backend_cmd("classifier"))
        try:
            assert c.classify(self.patch(200)) == ("mav", 0.75)
            assert c.classify(self.patch(20)) == ("clutter", 0.75)
            assert not c.degraded
        finally:
            c.close()

    def test_invalid_reply_passes_through(self):
        c = ProcessClassifier(backend_cmd("classifier-bad"))
        try:
            assert c.classify(self.patch(200)) == ("mav", 1.0)
            assert c.degraded
        finally:
            c.close()
