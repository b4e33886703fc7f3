import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from houghvp.errors import RegimeError
from houghvp.geometry import is_at_infinity
from houghvp.pipeline import classical_detect, inside_image, vp_angle_error
from houghvp.rectify import metric_d1, metric_d2
from houghvp.synth import gen_document, gen_line_bundle, page_homography, salt_and_pepper, sample_vp


def join(p, q):
    return np.cross([*p, 1.0], [*q, 1.0])


def same_point(a, b, tol=1e-9):
    a = np.asarray(a, float) / np.linalg.norm(a)
    b = np.asarray(b, float) / np.linalg.norm(b)
    return np.linalg.norm(np.cross(a, b)) < tol


class TestLineBundle:
    def test_deterministic(self):
        vp = np.array([30.0, -200.0, 1.0])
        a = gen_line_bundle(vp, 5, 64, 64, noise=0.1, clutter=3, seed=4)
        b = gen_line_bundle(vp, 5, 64, 64, noise=0.1, clutter=3, seed=4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, gen_line_bundle(vp, 5, 64, 64, noise=0.1, clutter=3, seed=5))

    def test_lines_pass_through_vp(self):
        vp = np.array([30.0, -200.0, 1.0])
        img = gen_line_bundle(vp, 4, 64, 64)
        xs = np.linspace(0.15 * 63, 0.85 * 63, 4)
        for x in xs:
            # walk from the anchor on the central row towards the VP
            for y in (5, 20, 50):
                t = (y - 31.5) / (vp[1] - 31.5)
                px = x + t * (vp[0] - x)
                i = int(round(px))
                assert img[y, i] > 0.45

    def test_minimal_instance(self):
        img = gen_line_bundle(np.array([10.0, 500.0, 1.0]), 2, 32, 32)
        assert img.max() > 0.9 and img.min() == 0.0

    def test_errors(self):
        with pytest.raises(RegimeError):
            gen_line_bundle(np.array([10.0, 10.0, 1.0]), 4, 32, 32)
        with pytest.raises(ValueError):
            gen_line_bundle(np.array([10.0, 500.0, 1.0]), 1, 32, 32)

    def test_salt_and_pepper(self, rng):
        img = np.full((50, 50), 0.5)
        out = salt_and_pepper(img, 0.1, rng)
        changed = out != 0.5
        assert 0.05 < changed.mean() < 0.15
        assert set(np.unique(out[changed])) <= {0.0, 1.0}


class TestSampling:
    @given(st.integers(0, 10_000), st.sampled_from(["vertical", "horizontal"]))
    def test_distance_range(self, seed, branch):
        rng = np.random.default_rng(seed)
        vp = sample_vp(rng, 80, 60, branch)
        d = np.hypot(vp[0] - 39.5, vp[1] - 29.5) / np.hypot(80, 60)
        assert 1.5 - 1e-9 <= d <= 20 + 1e-9
        assert not inside_image(vp, 80, 60)

    def test_both_sides_covered(self):
        rng = np.random.default_rng(0)
        ys = [sample_vp(rng, 64, 64, "vertical")[1] for _ in range(50)]
        assert min(ys) < 0 < max(ys)


class TestDocuments:
    @pytest.mark.parametrize("seed", range(15))
    def test_vps_are_edge_intersections(self, seed):
        smp = gen_document(seed, 96, 72)
        tl, tr, br, bl = smp.quad.corners
        assert same_point(np.cross(join(tl, tr), join(bl, br)), smp.horizontal_vp)
        assert same_point(np.cross(join(tl, bl), join(tr, br)), smp.vertical_vp)
        assert not inside_image(smp.horizontal_vp, 96, 72) and not inside_image(smp.vertical_vp, 96, 72)
        assert smp.quad.signed_area() > 0

    def test_fronto_parallel(self):
        smp = gen_document(1, 64, 64, 0.0)
        assert is_at_infinity(smp.horizontal_vp) and is_at_infinity(smp.vertical_vp)
        assert metric_d1([smp.quad]) == 0.0 and metric_d2([smp.quad]) == 0.0

    def test_deterministic(self):
        a, b = gen_document(9, 48, 48), gen_document(9, 48, 48)
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.quad.corners, b.quad.corners)

    def test_unit_jacobian_at_centre(self):
        m = page_homography(np.array([900.0, 40.0, 1.0]), np.array([-20.0, -700.0, 1.0]), 64, 64)
        c = m @ [0.0, 0.0, 1.0]
        e = 1e-6
        dx = (m @ [e, 0.0, 1.0])
        dy = (m @ [0.0, e, 1.0])
        jx = (dx[:2] / dx[2] - c[:2] / c[2]) / e
        jy = (dy[:2] / dy[2] - c[:2] / c[2]) / e
        assert np.linalg.norm(jx) == pytest.approx(1.0, rel=1e-5) and jx[0] > 0
        assert np.linalg.norm(jy) == pytest.approx(1.0, rel=1e-5) and jy[1] > 0

    def test_sidecar(self):
        smp = gen_document(2, 48, 40)
        side = smp.sidecar("000002.png", "test")
        assert side["schema"] == "houghvp-sample" and side["version"] == 1
        assert (side["width"], side["height"], side["split"]) == (48, 40, "test")
        assert len(side["quad"]) == 4 and len(side["vps"]["horizontal"]) == 3

    def test_impossible_distortion_is_rejected(self):
        with pytest.raises(RegimeError):
            gen_document(0, 64, 64, page_fraction=3.0, max_tries=3)

    def test_classical_detector_on_a_batch(self):
        errs = []
        for seed in range(100):
            smp = gen_document(seed, 128, 128)
            pair = classical_detect(smp.image)
            errs.append(vp_angle_error(smp.horizontal_vp, pair.horizontal_vp, 128, 128))
            errs.append(vp_angle_error(smp.vertical_vp, pair.vertical_vp, 128, 128))
        assert np.mean(errs) < 2.0
