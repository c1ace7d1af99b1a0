import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mavdet.errors import InvalidConfigError, NumericDegeneracyError
from mavdet.geometry import BBox
from mavdet.motioncomp import Homography
from mavdet.tracking import (
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


class TestParams:
    def test_defaults(self):
        p = KalmanParams()
        assert p.process_noise == 0.01
        assert p.measurement_noise == 1.0
        assert p.initial_covariance == 10.0

    def test_zero_process_noise_allowed(self):
        KalmanParams(process_noise=0.0)

    def test_invalid_values(self):
        with pytest.raises(InvalidConfigError):
            KalmanParams(process_noise=-0.1)
        with pytest.raises(InvalidConfigError):
            KalmanParams(measurement_noise=0.0)
        with pytest.raises(InvalidConfigError):
            KalmanParams(initial_covariance=0.0)

    def test_model_matrices(self):
        m = KalmanModel(KalmanParams())
        expected = np.array(
            [[1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float
        )
        assert np.array_equal(m.transition, expected)
        assert np.array_equal(
            m.measurement, np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)
        )
        assert np.array_equal(m.process_noise, 0.01 * np.eye(4))
        assert np.array_equal(m.measurement_noise, np.eye(2))


class TestInit:
    def test_fresh_track(self):
        t = init_track((100.0, 50.0), BBox(95, 45, 10, 10))
        assert np.array_equal(t.state, np.zeros(4))
        assert np.array_equal(t.covariance, 10.0 * np.eye(4))
        assert t.last_center == (100.0, 50.0)
        assert t.last_box == BBox(95, 45, 10, 10)
        assert t.lost_count == 0
        assert not t.primed

    def test_state_is_read_only(self):
        t = init_track((0.0, 0.0))
        with pytest.raises(ValueError):
            t.state[0] = 5.0


class TestPredict:
    def test_velocity_gains_acceleration(self):
        model = KalmanModel()
        t = TrackState(
            state=np.array([2.0, -1.0, 0.5, 0.25]),
            covariance=np.eye(4),
            last_center=(0.0, 0.0),
            last_box=None,
            primed=True,
        )
        after, predicted = kf_predict(t, model)
        assert np.allclose(after.state, [2.5, -0.75, 0.5, 0.25])
        assert np.allclose(predicted, [2.5, -0.75])

    def test_covariance_grows(self):
        model = KalmanModel()
        t = init_track((0.0, 0.0))
        after, _ = kf_predict(t, model)
        assert np.trace(after.covariance) > np.trace(t.covariance)

    def test_k_misses_apply_transition_power_exactly(self):
        # integer-valued state keeps the float arithmetic exact
        model = KalmanModel(KalmanParams(process_noise=0.0))
        x0 = np.array([3.0, -2.0, 1.0, 4.0])
        t = TrackState(
            state=x0, covariance=np.eye(4), last_center=(0.0, 0.0),
            last_box=None, primed=True,
        )
        for k in range(1, 8):
            t, _ = kf_predict(t, model)
            t = kf_update(t, model, None)
            expected = np.linalg.matrix_power(model.transition, k) @ x0
            assert np.array_equal(t.state, expected)
            assert t.lost_count == k


class TestUpdate:
    def test_miss_only_bumps_counter(self):
        model = KalmanModel()
        t = init_track((0.0, 0.0))
        after = kf_update(t, model, None)
        assert after.lost_count == 1
        assert np.array_equal(after.state, t.state)
        assert np.array_equal(after.covariance, t.covariance)

    def test_first_measurement_seeds_velocity(self):
        model = KalmanModel()
        t = init_track((0.0, 0.0))
        after = kf_update(t, model, np.array([4.0, -1.5]))
        assert np.array_equal(after.state, [4.0, -1.5, 0.0, 0.0])
        assert after.primed
        assert after.lost_count == 0

    def test_update_resets_lost_count(self):
        model = KalmanModel()
        t = init_track((0.0, 0.0))
        t = kf_update(t, model, np.array([1.0, 1.0]))
        t = kf_update(kf_predict(t, model)[0], model, None)
        assert t.lost_count == 1
        t = kf_update(kf_predict(t, model)[0], model, np.array([1.0, 1.0]))
        assert t.lost_count == 0

    def test_converges_to_constant_velocity(self):
        model = KalmanModel(KalmanParams(process_noise=1e-9))
        t = init_track((0.0, 0.0))
        z = np.array([3.0, -2.0])
        for _ in range(60):
            t, _ = kf_predict(t, model)
            t = kf_update(t, model, z)
        assert np.allclose(t.state[:2], z, atol=1e-3)
        assert np.allclose(t.state[2:], [0.0, 0.0], atol=1e-3)

    def test_singular_innovation_raises(self):
        model = KalmanModel()
        broken = TrackState(
            state=np.zeros(4),
            covariance=np.diag([-1.0, -1.0, 0.0, 0.0]),
            last_center=(0.0, 0.0),
            last_box=None,
            primed=True,
        )
        with pytest.raises(NumericDegeneracyError):
            kf_update(broken, model, np.array([1.0, 1.0]))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6))
    def test_covariance_stays_symmetric_psd(self, seed):
        rng = np.random.default_rng(seed)
        model = KalmanModel()
        t = init_track((0.0, 0.0))
        for _ in range(30):
            t, _ = kf_predict(t, model)
            if rng.random() < 0.4:
                t = kf_update(t, model, None)
            else:
                t = kf_update(t, model, rng.normal(0, 3, 2))
            p = t.covariance
            assert np.allclose(p, p.T, atol=1e-10)
            assert np.linalg.eigvalsh(p).min() > -1e-10


class TestGeometryHelpers:
    def test_measure_velocity_compensates_camera(self):
        h = Homography.translation(10.0, 0.0)
        v = measure_velocity((50.0, 50.0), (63.0, 52.0), h)
        assert np.allclose(v, [3.0, 2.0])

    def test_predict_center(self):
        h = Homography.translation(-5.0, 2.0)
        c = predict_center((100.0, 100.0), h, (4.0, -1.0))
        assert c == pytest.approx((99.0, 101.0))

    def test_identity_reduces_to_plain_difference(self):
        v = measure_velocity((10.0, 20.0), (12.0, 19.0), Homography.identity())
        assert np.allclose(v, [2.0, -1.0])


class TestSearchRegion:
    def test_growth_schedule(self):
        for lost, side in ((0, 300), (10, 340), (30, 420)):
            box = search_region((960.0, 540.0), lost, 1920, 1080)
            assert box.w == side and box.h == side

    def test_centered_when_unconstrained(self):
        box = search_region((960.0, 540.0), 0, 1920, 1080)
        assert box == BBox(810, 390, 300, 300)

    def test_clamped_to_origin_corner(self):
        box = search_region((0.0, 0.0), 0, 1920, 1080)
        assert box == BBox(0, 0, 300, 300)

    def test_clamped_to_far_corner(self):
        box = search_region((1920.0, 1080.0), 0, 1920, 1080)
        assert box == BBox(1620, 780, 300, 300)

    def test_side_capped_by_smaller_dimension(self):
        box = search_region((960.0, 540.0), 1000, 1920, 1080)
        assert box.w == 1080 and box.h == 1080

    def test_negative_lost_count_rejected(self):
        with pytest.raises(InvalidConfigError):
            search_region((0.0, 0.0), -1, 100, 100)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(-500, 2500, allow_nan=False),
        st.floats(-500, 1500, allow_nan=False),
        st.integers(0, 100),
    )
    def test_always_inside_image(self, cx, cy, lost):
        box = search_region((cx, cy), lost, 1920, 1080)
        assert box.x >= 0 and box.y >= 0
        assert box.x2 <= 1920 and box.y2 <= 1080
        assert box.w == box.h == min(300 + 4 * lost, 1080)
