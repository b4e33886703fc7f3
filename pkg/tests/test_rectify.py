import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from houghvp.errors import DegenerateError
from houghvp.rectify import (
    Quad,
    angle_stats,
    bilinear_sample,
    corner_angles,
    edge_orientations,
    evaluate_quads,
    homography_from_vps,
    metric_d1,
    metric_d2,
    output_frame,
    psnr,
    transform_points,
    transform_quad,
    warp,
)
from houghvp.synth import gen_document

SQUARE = Quad.from_list([[0, 0], [10, 0], [10, 10], [0, 10]])


def rotation(deg, centre=(5.0, 5.0)):
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    cx, cy = centre
    return np.array([[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy], [0, 0, 1.0]])


class TestQuad:
    def test_validation(self):
        with pytest.raises(ValueError):
            Quad(np.zeros((3, 2)))

    def test_area_and_simplicity(self):
        assert SQUARE.signed_area() == 100.0
        assert SQUARE.is_simple()
        bowtie = Quad.from_list([[0, 0], [10, 10], [10, 0], [0, 10]])
        assert not bowtie.is_simple()

    def test_tolist_round_trip(self):
        np.testing.assert_array_equal(Quad.from_list(SQUARE.tolist()).corners, SQUARE.corners)


class TestMetrics:
    def test_square_is_zero(self):
        assert metric_d1([SQUARE]) == 0.0 and metric_d2([SQUARE]) == 0.0

    @pytest.mark.parametrize("deg", [-20.0, -3.0, 4.0, 10.0])
    def test_rotated_square(self, deg):
        q = transform_quad(SQUARE, rotation(deg))
        assert metric_d1([q]) == pytest.approx(0.0, abs=1e-9)
        assert metric_d2([q]) == pytest.approx(abs(deg), abs=1e-9)
        av, ah = edge_orientations(q)
        assert av == pytest.approx(deg) and ah == pytest.approx(deg)

    def test_trapezoid(self):
        # top edge shorter by 2 on each side over height 10: base angles atan(10/2)
        q = Quad.from_list([[2, 0], [8, 0], [10, 10], [0, 10]])
        base = np.degrees(np.arctan2(10, 2))
        np.testing.assert_allclose(corner_angles(q), [180 - base, 180 - base, base, base])
        assert metric_d1([q]) == pytest.approx(90 - base)
        # left edge leans by -atan(2/10), right by +atan(2/10): mean 0; top/bottom level
        assert metric_d2([q]) == pytest.approx(0.0, abs=1e-12)

    @given(st.lists(st.tuples(st.floats(-40, 40), st.floats(-40, 40)), min_size=4, max_size=4))
    def test_convex_angles_sum_to_360(self, jitter):
        c = np.array([[0, 0], [100, 0], [100, 100], [0, 100]], dtype=float) + np.array(jitter) * 0.5
        q = Quad(c)
        if q.is_simple() and q.signed_area() > 0 and np.all(corner_angles(q) < 180):
            assert corner_angles(q).sum() == pytest.approx(360.0)

    def test_invalid_quads_are_excluded(self):
        bowtie = Quad.from_list([[0, 0], [10, 10], [10, 0], [0, 10]])
        stats, excluded = angle_stats([SQUARE, bowtie])
        assert stats.n == 1 and excluded == 1
        report = evaluate_quads([SQUARE, bowtie])
        assert (report.n, report.excluded, report.d1) == (1, 1, 0.0)
        with pytest.raises(DegenerateError):
            metric_d1([bowtie])


class TestHomography:
    def test_axis_vps_give_identity(self):
        m = homography_from_vps([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 32, 24)
        np.testing.assert_allclose(m, np.eye(3), atol=1e-15)

    def test_sends_vps_to_infinity_and_fixes_centre(self):
        vh, vv = np.array([400.0, 20.0, 1.0]), np.array([10.0, -300.0, 1.0])
        m = homography_from_vps(vh, vv, 64, 48)
        h_img, v_img = m @ vh, m @ vv
        assert abs(h_img[2]) < 1e-12 * abs(h_img[0]) and abs(h_img[1]) < 1e-12 * abs(h_img[0])
        assert abs(v_img[2]) < 1e-12 * abs(v_img[1]) and abs(v_img[0]) < 1e-12 * abs(v_img[1])
        np.testing.assert_allclose(transform_points(m, np.array([[31.5, 23.5]])), [[31.5, 23.5]], atol=1e-9)

    def test_orientation_is_preserved(self):
        # VPs on the "wrong" sides must not mirror the image
        m = homography_from_vps([-400.0, 20.0, 1.0], [10.0, 500.0, 1.0], 64, 48)
        q = transform_quad(Quad.from_list([[20, 10], [40, 10], [40, 30], [20, 30]]), m)
        assert q.signed_area() > 0

    @pytest.mark.parametrize("seed", range(12))
    def test_generated_documents_become_rectangles(self, seed):
        smp = gen_document(seed, 96, 80)
        m = homography_from_vps(smp.horizontal_vp, smp.vertical_vp, 96, 80)
        np.testing.assert_allclose(corner_angles(transform_quad(smp.quad, m)), 90.0, atol=1e-6)

    def test_degenerate_pairs(self):
        with pytest.raises(DegenerateError):
            homography_from_vps([100.0, 0.0, 1.0], [100.0, 0.0, 1.0], 32, 32)
        with pytest.raises(DegenerateError):
            # both on the same line through the centre
            homography_from_vps([15.5 + 100, 15.5, 1.0], [15.5 - 100, 15.5, 1.0], 32, 32)


class TestWarp:
    def test_bilinear(self):
        img = np.arange(12, dtype=float).reshape(3, 4)
        assert bilinear_sample(img, np.array(1.5), np.array(0.5)) == pytest.approx((1 + 2 + 5 + 6) / 4)
        assert bilinear_sample(img, np.array(-3.0), np.array(0.0)) == 0.0
        np.testing.assert_array_equal(bilinear_sample(img, *np.meshgrid(np.arange(4.0), np.arange(3.0))), img)

    def test_identity_is_copy(self, rng):
        img = rng.random((20, 30))
        np.testing.assert_array_equal(warp(img, np.eye(3)), img)
        np.testing.assert_array_equal(warp(img, np.eye(3), shape=(20, 30), origin=(0.0, 0.0)), img)

    def test_integer_shift(self, rng):
        img = rng.random((10, 10))
        m = np.array([[1, 0, 3], [0, 1, 2], [0, 0, 1.0]])
        out = warp(img, m, shape=(10, 10), origin=(0.0, 0.0))
        np.testing.assert_array_equal(out[2:, 3:], img[:8, :7])
        assert not out[:2].any() and not out[:, :3].any()

    def test_output_frame(self):
        origin, shape = output_frame(rotation(90, (4.5, 4.5)), 10, 10)
        np.testing.assert_allclose(origin, [0, 0])
        assert shape == (10, 10)

    def test_round_trip_psnr(self):
        ys, xs = np.mgrid[0:96, 0:96] / 96.0
        img = 0.5 + 0.25 * np.sin(2 * np.pi * (2 * xs + ys)) * np.cos(2 * np.pi * 3 * ys)
        smp = gen_document(5, 96, 96)
        m = homography_from_vps(smp.horizontal_vp, smp.vertical_vp, 96, 96)
        frame = dict(shape=(96, 96), origin=(0.0, 0.0))
        back = warp(warp(img, m, **frame), np.linalg.inv(m), **frame)
        # pixels whose whole bilinear footprint survived both warps
        kept = warp(warp(np.ones((96, 96)), m, **frame), np.linalg.inv(m), **frame) > 1 - 1e-9
        assert kept.mean() > 0.3
        assert psnr(back[kept], img[kept]) > 35.0

    def test_singular(self):
        with pytest.raises(DegenerateError):
            warp(np.ones((4, 4)), np.zeros((3, 3)))

    def test_psnr(self):
        a = np.zeros((4, 4))
        assert psnr(a, a) == float("inf")
        assert psnr(a, a + 0.1) == pytest.approx(20.0)
