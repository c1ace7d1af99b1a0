import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mavdet.errors import (
    DegenerateConfigurationError,
    DimensionMismatchError,
    EmptyMatchSetError,
    InsufficientMatchesError,
    InvalidDimensionsError,
)
from mavdet.geometry import GrayImage
from mavdet.motioncomp import (
    AlignmentConfig,
    Homography,
    KeypointMatch,
    align_frames,
    background_motion_term,
    estimate_homography,
    reprojection_inliers,
    sample_grid_keypoints,
    track_keypoints,
    warp_frame,
)


def textured(width=320, height=240, seed=0):
    rng = np.random.default_rng(seed)
    import cv2

    base = rng.standard_normal((height, width)).astype(np.float32)
    base = cv2.GaussianBlur(base, (0, 0), 3.0)
    base = 128 + 60 * base / base.std()
    return GrayImage(np.clip(base, 0, 255).astype(np.uint8))


def shift_image(img: GrayImage, dx: int, dy: int) -> GrayImage:
    out = np.zeros_like(img.data)
    h, w = img.data.shape
    out[
        max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)
    ] = img.data[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)]
    return GrayImage(out)


class TestGrid:
    def test_full_frame_grid_count(self):
        pts = sample_grid_keypoints(1920, 1080, 30, 20)
        assert pts.shape == (600, 2)

    def test_single_cell_center(self):
        pts = sample_grid_keypoints(100, 50, 1, 1)
        assert pts.tolist() == [[50.0, 25.0]]

    def test_two_by_two(self):
        pts = sample_grid_keypoints(100, 100, 2, 2)
        assert {tuple(p) for p in pts.tolist()} == {
            (25.0, 25.0),
            (75.0, 25.0),
            (25.0, 75.0),
            (75.0, 75.0),
        }

    def test_validation(self):
        with pytest.raises(InvalidDimensionsError):
            sample_grid_keypoints(0, 100)
        with pytest.raises(InvalidDimensionsError):
            sample_grid_keypoints(100, 100, 0, 5)

    def test_points_inside_image(self):
        pts = sample_grid_keypoints(33, 17, 7, 5)
        assert (pts[:, 0] > 0).all() and (pts[:, 0] < 33).all()
        assert (pts[:, 1] > 0).all() and (pts[:, 1] < 17).all()


class TestTracking:
    def test_identical_frames_zero_motion(self):
        img = textured()
        pts = sample_grid_keypoints(img.width, img.height, 8, 6)
        matches = track_keypoints(img, img, pts)
        tracked = [m for m in matches if m.tracked]
        assert len(tracked) >= 0.9 * len(matches)
        for m in tracked:
            assert abs(m.cur[0] - m.prev[0]) < 0.1
            assert abs(m.cur[1] - m.prev[1]) < 0.1

    def test_five_pixel_shift(self):
        img = textured(seed=2)
        cur = shift_image(img, 5, 0)
        pts = sample_grid_keypoints(img.width, img.height, 8, 6)
        matches = track_keypoints(img, cur, pts)
        tracked = [m for m in matches if m.tracked]
        assert len(tracked) >= len(matches) // 2
        for m in tracked:
            assert m.cur[0] - m.prev[0] == pytest.approx(5.0, abs=0.25)
            assert m.cur[1] - m.prev[1] == pytest.approx(0.0, abs=0.25)

    def test_uniform_images_all_untracked(self):
        img = GrayImage(np.full((120, 160), 77, dtype=np.uint8))
        pts = sample_grid_keypoints(160, 120, 6, 4)
        matches = track_keypoints(img, img, pts)
        assert len(matches) == len(pts)
        assert all(not m.tracked for m in matches)

    def test_dimension_mismatch(self):
        a = textured(64, 64)
        b = textured(64, 32)
        with pytest.raises(DimensionMismatchError):
            track_keypoints(a, b, sample_grid_keypoints(64, 64, 2, 2))

    def test_match_count_equals_input(self):
        img = textured(seed=5)
        pts = sample_grid_keypoints(img.width, img.height, 10, 7)
        assert len(track_keypoints(img, img, pts)) == 70


def synthetic_matches(h: Homography, n=60, seed=0):
    rng = np.random.default_rng(seed)
    prev = rng.uniform(20, 280, size=(n, 2))
    cur = h.apply(prev)
    return [
        KeypointMatch(prev=tuple(p), cur=tuple(c), tracked=True)
        for p, c in zip(prev, cur)
    ]


class TestHomography:
    def test_normalization(self):
        h = Homography(2.0 * np.eye(3))
        assert h.matrix[2, 2] == 1.0
        assert np.allclose(h.matrix, np.eye(3))

    def test_invalid_shape(self):
        with pytest.raises(InvalidDimensionsError):
            Homography(np.eye(2))

    def test_degenerate_scale(self):
        m = np.eye(3)
        m[2, 2] = 0.0
        with pytest.raises(DegenerateConfigurationError):
            Homography(m)

    def test_apply_and_inverse_roundtrip(self):
        h = Homography(
            np.array([[1.1, 0.02, 5.0], [-0.01, 0.97, -3.0], [1e-5, -2e-5, 1.0]])
        )
        pts = np.array([[10.0, 20.0], [200.0, 150.0]])
        back = h.inverse().apply(h.apply(pts))
        assert np.allclose(back, pts, atol=1e-9)

    def test_origin_shift_matches_manual_composition(self):
        h = Homography.translation(3.0, -2.0)
        lifted = h.with_origin_shift(100.0, 50.0)
        # translations commute with origin shifts
        assert np.allclose(lifted.matrix, h.matrix)
        x, y = lifted.apply_point((120.0, 60.0))
        assert (x, y) == pytest.approx((123.0, 58.0))

    def test_compose(self):
        a = Homography.translation(1.0, 2.0)
        b = Homography.translation(10.0, 20.0)
        c = a.compose(b)
        assert c.apply_point((0.0, 0.0)) == pytest.approx((11.0, 22.0))


class TestEstimateHomography:
    def test_identity_from_static_matches(self):
        matches = synthetic_matches(Homography.identity())
        h = estimate_homography(matches)
        assert np.allclose(h.matrix, np.eye(3), atol=1e-6)

    def test_pure_translation(self):
        matches = synthetic_matches(Homography.translation(5.0, 0.0))
        h = estimate_homography(matches)
        expected = np.array([[1, 0, 5], [0, 1, 0], [0, 0, 1]], dtype=float)
        assert np.allclose(h.matrix, expected, atol=1e-4)

    def test_projective_with_outliers(self):
        truth = Homography(
            np.array([[1.02, 0.015, 8.0], [-0.012, 0.99, -5.0], [2e-5, -1e-5, 1.0]])
        )
        matches = synthetic_matches(truth, n=100, seed=3)
        rng = np.random.default_rng(7)
        corrupted = list(matches)
        for k in range(10):  # 10% outliers
            m = corrupted[k * 9]
            corrupted[k * 9] = KeypointMatch(
                prev=m.prev,
                cur=(m.cur[0] + rng.uniform(30, 80), m.cur[1] - rng.uniform(30, 80)),
                tracked=True,
            )
        h = estimate_homography(corrupted)
        assert np.allclose(h.matrix, truth.matrix, atol=1e-2)

    def test_insufficient_matches(self):
        matches = synthetic_matches(Homography.identity(), n=5)
        with pytest.raises(InsufficientMatchesError):
            estimate_homography(matches)

    def test_untracked_matches_do_not_count(self):
        matches = [
            KeypointMatch(prev=(float(i), 0.0), cur=(float(i), 0.0), tracked=False)
            for i in range(20)
        ]
        with pytest.raises(InsufficientMatchesError):
            estimate_homography(matches)

    def test_collinear_points_degenerate(self):
        matches = [
            KeypointMatch(prev=(float(i), 10.0), cur=(float(i) + 1, 10.0), tracked=True)
            for i in range(20)
        ]
        with pytest.raises((DegenerateConfigurationError, InsufficientMatchesError)):
            h = estimate_homography(matches)
            # cv2 occasionally returns a matrix for collinear input; it must
            # then fail the finiteness/normalization acceptance test
            if not np.isfinite(h.matrix).all():
                raise DegenerateConfigurationError("non-finite")

    def test_affine_and_similarity_recovery(self):
        for matrix in (
            np.array([[0.98, 0.05, 3.0], [-0.05, 0.98, -2.0], [0.0, 0.0, 1.0]]),
            np.array([[1.05, 0.0, -4.0], [0.0, 0.93, 6.0], [0.0, 0.0, 1.0]]),
        ):
            truth = Homography(matrix)
            h = estimate_homography(synthetic_matches(truth, n=80, seed=11))
            assert np.allclose(h.matrix, truth.matrix, atol=1e-6)


class TestWarp:
    def test_identity(self):
        img = textured(seed=4)
        warped, valid = warp_frame(img, Homography.identity())
        assert np.array_equal(warped.data, img.data)
        assert valid.count() == img.width * img.height

    def test_integer_translation(self):
        img = textured(seed=6)
        warped, valid = warp_frame(img, Homography.translation(5.0, 0.0))
        # output(x, y) = input(x - 5, y) on valid pixels
        assert np.array_equal(warped.data[:, 5:], img.data[:, :-5])
        assert (valid.data[:, 5:] == 255).all()
        assert (valid.data[:, :5] == 0).all()

    def test_histogram_preserved_for_integer_translation(self):
        img = textured(seed=8)
        warped, valid = warp_frame(img, Homography.translation(7.0, 3.0))
        inside = warped.data[valid.data == 255]
        source = img.data[:-3, :-7]
        assert np.array_equal(
            np.bincount(inside.ravel(), minlength=256),
            np.bincount(source.ravel(), minlength=256),
        )

    def test_roundtrip_within_two_levels(self):
        img = textured(seed=9)
        h = Homography(
            np.array([[1.01, 0.01, 2.5], [-0.01, 0.99, -1.5], [0.0, 0.0, 1.0]])
        )
        once, valid1 = warp_frame(img, h)
        back, valid2 = warp_frame(once, h.inverse())
        both = (valid1.data == 255) & (valid2.data == 255)
        # erode the joint-valid region: edge pixels mix with sentinel zeros
        import cv2

        interior = cv2.erode(both.astype(np.uint8), np.ones((5, 5), np.uint8)) > 0
        diff = np.abs(back.data.astype(int) - img.data.astype(int))[interior]
        # double bilinear resampling smooths; the error stays small on average
        assert diff.mean() <= 2.0
        assert np.percentile(diff, 95) <= 8


class TestBackgroundMotion:
    def test_zero_residuals(self):
        matches = synthetic_matches(Homography.translation(4.0, 1.0))
        assert background_motion_term(matches, Homography.translation(4.0, 1.0)) == 0.0

    def test_mean_of_one_and_three(self):
        matches = [
            KeypointMatch(prev=(0.0, 0.0), cur=(1.0, 0.0), tracked=True),
            KeypointMatch(prev=(10.0, 0.0), cur=(10.0, 3.0), tracked=True),
        ]
        assert background_motion_term(matches, Homography.identity()) == pytest.approx(2.0)

    def test_empty_raises(self):
        with pytest.raises(EmptyMatchSetError):
            background_motion_term([], Homography.identity())
        only_untracked = [
            KeypointMatch(prev=(0.0, 0.0), cur=(0.0, 0.0), tracked=False)
        ]
        with pytest.raises(EmptyMatchSetError):
            background_motion_term(only_untracked, Homography.identity())

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 40))
        prev = rng.uniform(0, 100, (n, 2))
        cur = rng.uniform(0, 100, (n, 2))
        matches = [
            KeypointMatch(prev=tuple(p), cur=tuple(c), tracked=True)
            for p, c in zip(prev, cur)
        ]
        h = Homography.translation(float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)))
        expected = sum(
            float(np.hypot(c[0] - (p[0] + h.matrix[0, 2]), c[1] - (p[1] + h.matrix[1, 2])))
            for p, c in zip(prev, cur)
        ) / n
        assert background_motion_term(matches, h) == pytest.approx(expected, abs=1e-9)


class TestAlignFrames:
    def test_translation_scene(self):
        img = textured(seed=12)
        cur = shift_image(img, 4, 2)
        result = align_frames(img, cur)
        assert not result.fallback
        assert result.homography.matrix[0, 2] == pytest.approx(4.0, abs=0.2)
        assert result.homography.matrix[1, 2] == pytest.approx(2.0, abs=0.2)
        assert result.background_motion < 0.5
        assert len(result.inliers) >= 8

    def test_textureless_falls_back_to_identity(self):
        flat = GrayImage(np.full((120, 160), 100, dtype=np.uint8))
        result = align_frames(flat, flat)
        assert result.fallback
        assert np.array_equal(result.homography.matrix, np.eye(3))
        assert result.background_motion == 0.0

    def test_inliers_are_subset_of_tracked(self):
        img = textured(seed=13)
        cur = shift_image(img, 3, 1)
        result = align_frames(img, cur)
        tracked = {m.prev for m in result.matches if m.tracked}
        assert all(m.prev in tracked for m in result.inliers)

    def test_reprojection_inliers_threshold(self):
        matches = synthetic_matches(Homography.identity(), n=10)
        far = KeypointMatch(prev=(0.0, 0.0), cur=(10.0, 0.0), tracked=True)
        inliers = reprojection_inliers(matches + [far], Homography.identity(), 3.0)
        assert len(inliers) == 10
