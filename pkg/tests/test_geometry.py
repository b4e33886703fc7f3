import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from houghvp.errors import DegenerateError, OutOfQuadrantError
from houghvp.fht import Quadrant
from houghvp.geometry import (
    BorderSegment,
    ConvGeometry,
    CoordChain,
    back_project,
    chain_map,
    dehomogenize,
    double_map,
    double_map_matrix,
    hough_line_of_point,
    is_at_infinity,
    line_to_hough_matrix,
    point_of_hough_line,
    point_to_line,
    second_dims,
    seg_to_point,
    skew_h,
    skew_v,
)

from .oracles import receptive_centre

dims = st.tuples(st.integers(32, 512), st.integers(32, 512))
unit = st.floats(0.0, 1.0)


class TestSegments:
    def test_vertical_segment(self):
        # vertical line x = 3 in an 8-high image: alpha = h, s = x0 + h / 2
        p = seg_to_point(BorderSegment("vertical", 3, 3), 10, 8)
        assert (p.s, p.alpha, p.space) == (7.0, 8.0, Quadrant.H12)

    def test_horizontal_segment(self):
        p = seg_to_point(BorderSegment("horizontal", 2, 2), 8, 10)
        assert (p.s, p.alpha, p.space) == (6.0, 8.0, Quadrant.H34)

    @pytest.mark.parametrize("a, b", [(0, 9), (9, 0)])
    def test_out_of_quadrant(self, a, b):
        with pytest.raises(OutOfQuadrantError):
            seg_to_point(BorderSegment("vertical", a, b), 10, 8)
        with pytest.raises(OutOfQuadrantError):
            seg_to_point(BorderSegment("horizontal", a, b), 8, 10)

    def test_skews_meet_at_seam(self):
        assert skew_v(0, 8) == 8 and skew_v(16, 8) == 0
        assert skew_h(0, 8) == 0 and skew_h(16, 8) == 8

    @given(unit, unit, unit, dims)
    def test_points_of_segment_trace_lines_through_its_hough_point(self, a, b, t, wh):
        w, h = wh
        x0 = a * w
        x1 = x0 + (2 * b - 1) * h
        p = seg_to_point(BorderSegment("vertical", x0, x1), w, h)
        x, y = x0 + t * (x1 - x0), t * h
        line = point_to_line(x, y, "H12", w, h)
        assert line(p.alpha) == pytest.approx(p.s, rel=1e-12, abs=1e-9)

    @given(unit, unit, unit, dims)
    def test_horizontal_family(self, a, b, t, wh):
        w, h = wh
        y0 = a * h
        y1 = y0 - (2 * b - 1) * w
        p = seg_to_point(BorderSegment("horizontal", y0, y1), w, h)
        line = point_to_line(t * w, y0 + t * (y1 - y0), "H34", w, h)
        assert line(p.alpha) == pytest.approx(p.s, rel=1e-12, abs=1e-9)


class TestDoubleMap:
    def test_frozen_examples(self):
        p = double_map(0.5, 1.5, "vertical", 1, 1)
        assert (p.s, p.alpha) == (2.0, 4.0)
        np.testing.assert_allclose(dehomogenize(back_project(2.0, 4.0, "vertical", 1, 1)), [0.5, 1.5])
        p = double_map(1.5, 0.5, "horizontal", 1, 1)
        assert (p.s, p.alpha) == (2.0, 0.0)

    def test_second_dims(self):
        assert second_dims("vertical", 10, 8) == (18, 16)
        assert second_dims("horizontal", 10, 8) == (18, 20)

    @pytest.mark.parametrize("branch, x, y", [("vertical", 3.0, 4.0), ("horizontal", 5.0, 1.0)])
    def test_singular_line(self, branch, x, y):
        with pytest.raises(DegenerateError):
            double_map(x, y, branch, 10, 8)

    @given(st.sampled_from(["vertical", "horizontal"]), dims, st.floats(-5, 5), st.floats(-5, 5))
    def test_round_trip(self, branch, wh, u, v):
        w, h = wh
        x, y = u * w, v * h
        assume(abs(2 * y - h) > 1e-3 if branch == "vertical" else abs(2 * x - w) > 1e-3)
        p = double_map(x, y, branch, w, h)
        back = dehomogenize(back_project(p.s, p.alpha, branch, w, h))
        np.testing.assert_allclose(back, [x, y], rtol=1e-9, atol=1e-9 * max(w, h))

    @given(st.sampled_from(["vertical", "horizontal"]), dims, st.floats(-3, 3), st.floats(-3, 3))
    def test_matrix_form_agrees(self, branch, wh, u, v):
        w, h = wh
        x, y = u * w, v * h
        assume(abs(2 * y - h) > 1e-3 if branch == "vertical" else abs(2 * x - w) > 1e-3)
        p = double_map(x, y, branch, w, h)
        q = double_map_matrix(branch, w, h) @ np.array([x, y, 1.0])
        np.testing.assert_allclose(q[:2] / q[2], [p.s, p.alpha], rtol=1e-9, atol=1e-9 * max(w, h))

    @pytest.mark.parametrize("branch", ["vertical", "horizontal"])
    def test_alpha_w_plus_h_is_at_infinity(self, branch):
        w, h = 40, 30
        p = back_project(12.0, w + h, branch, w, h)
        assert p[2] == 0 and is_at_infinity(p)
        with pytest.raises(DegenerateError):
            dehomogenize(p)

    def test_infinity_threshold(self):
        assert is_at_infinity([1.0, 0.0, 0.0])
        assert is_at_infinity([1.0, 0.0, 5e-7])
        assert not is_at_infinity([1.0, 0.0, 2e-6])


class TestMatrices:
    @given(st.sampled_from(["H12", "H34"]), dims, st.floats(-2, 2), st.floats(-2, 2))
    def test_point_line_duality(self, space, wh, u, v):
        w, h = wh
        p = np.array([u * w, v * h, 1.0])
        line = hough_line_of_point(p, space, w, h)
        back = point_of_hough_line(line, space, w, h)
        np.testing.assert_allclose(back / back[2], p, rtol=1e-9, atol=1e-9 * max(w, h))

    @given(st.sampled_from(["H12", "H34"]), dims, unit, unit)
    def test_hough_line_matches_closed_form(self, space, wh, u, v):
        w, h = wh
        x, y = u * w, v * h
        a, b, c = hough_line_of_point([x, y, 1.0], space, w, h)
        closed = point_to_line(x, y, space, w, h)
        for alpha in (0.0, 7.0, 2.0 * h):
            # a s + b alpha + c = 0 along the closed-form line
            assert a * closed(alpha) + b * alpha + c == pytest.approx(0.0, abs=1e-9 * max(w, h) * max(abs(a), 1))

    def test_line_matrix_of_vertical_line(self):
        # x = 3 -> (a, b, c) = (1, 0, -3); segment (3, 0)-(3, h)
        s, alpha, q = line_to_hough_matrix("H12", 10, 8) @ np.array([1.0, 0.0, -3.0])
        p = seg_to_point(BorderSegment("vertical", 3, 3), 10, 8)
        np.testing.assert_allclose([s / q, alpha / q], [p.s, p.alpha])

    def test_rejects_single_quadrants(self):
        with pytest.raises(ValueError):
            line_to_hough_matrix("H1", 8, 8)


class TestCoordChain:
    def test_spec_example(self):
        chain = CoordChain((ConvGeometry((5, 5), (2, 2)), ConvGeometry((5, 5), (1, 1))))
        # conv 5x5/2 then 5x5/1: i -> 2 (i + 2) + 2
        for i in range(6):
            assert chain_map(chain, (i, i)) == (2 * i + 6.0, 2 * i + 6.0)

    @given(
        st.lists(st.tuples(st.sampled_from([1, 3, 5, 9]), st.sampled_from([1, 2, 3])), min_size=1, max_size=4),
        st.integers(0, 6),
    )
    def test_matches_receptive_field_oracle(self, layers, i):
        chain = CoordChain(tuple(ConvGeometry((k, k), (s, s)) for k, s in layers))
        row, col = chain_map(chain, (i, i))
        expected = receptive_centre(layers, i)
        assert row == col == expected

    def test_matrix_agrees_with_chain_map(self):
        chain = CoordChain((ConvGeometry((3, 9), (1, 1)), ConvGeometry((5, 5), (3, 3)), ConvGeometry((3, 5), (2, 1))))
        m = chain.matrix()
        for r, c in [(0, 0), (4, 7), (10, 2)]:
            x, y, _ = m @ np.array([c, r, 1.0])
            assert chain_map(chain, (r, c)) == pytest.approx((y, x))
        np.testing.assert_allclose(chain.inverse_matrix() @ m, np.eye(3), atol=1e-12)

    def test_empty_chain_is_identity(self):
        assert chain_map(CoordChain(), (3.5, 2.0)) == (3.5, 2.0)
