import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import flood_fill_areas, otsu_scan
from pennation.errors import DegenerateInputError, ParameterError
from pennation.imaging import (
    LineFit,
    as_image,
    binarize,
    connected_components,
    convolve_gaussian,
    fit_line_least_squares,
    gaussian_kernel,
    line_residual_ss,
    list_frames,
    otsu_threshold,
    quantize_256,
    read_image,
    rescale_to_byte_range,
    sobel_gradients,
    write_pgm,
    write_png,
)


class TestImageBasics:
    def test_rejects_non_2d(self):
        with pytest.raises(ParameterError):
            as_image(np.zeros((3, 3, 3)))
        with pytest.raises(ParameterError):
            as_image(np.zeros((0, 4)))

    def test_quantize_rounds_and_clips(self):
        q = quantize_256(np.array([[-3.0, 0.49, 0.5, 254.6, 300.0]]))
        assert q.tolist() == [[0, 0, 1, 255, 255]]

    def test_rescale_constant_is_zero(self):
        assert np.all(rescale_to_byte_range(np.full((4, 4), 7.0)) == 0)
        r = rescale_to_byte_range(np.array([[1.0, 3.0, 5.0]]))
        assert r.tolist() == [[0.0, 127.5, 255.0]]


class TestIO:
    def test_png_and_pgm_roundtrip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(17, 23)).astype(float)
        write_png(tmp_path / "a.png", img)
        write_pgm(tmp_path / "b.pgm", img)
        assert np.array_equal(read_image(tmp_path / "a.png"), img)
        assert np.array_equal(read_image(tmp_path / "b.pgm"), img)

    def test_frames_in_lexicographic_order(self, tmp_path):
        for name in ("f10.png", "f02.pgm", "f1.png", "notes.txt"):
            (tmp_path / name).write_bytes(b"")
        assert [p.name for p in list_frames(tmp_path)] == ["f02.pgm", "f1.png", "f10.png"]

    def test_16_bit_rejected(self, tmp_path):
        from PIL import Image
        Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(tmp_path / "x.png")
        with pytest.raises(ParameterError):
            read_image(tmp_path / "x.png")


class TestGaussian:
    def test_constant_preserved(self):
        out = convolve_gaussian(np.full((20, 30), 100.0), 2.0)
        assert np.allclose(out, 100.0, atol=1e-12)

    def test_impulse_peak(self):
        img = np.zeros((33, 33))
        img[16, 16] = 1.0
        out = convolve_gaussian(img, 1.0)
        assert out[16, 16] == pytest.approx(1 / (2 * math.pi), rel=0.02)

    def test_interior_mass_preserved(self):
        img = np.zeros((21, 21))
        img[10, 10] = 5.0
        assert convolve_gaussian(img, 0.5).sum() == pytest.approx(5.0, rel=0.005)

    def test_kernel_radius(self):
        assert gaussian_kernel(1.0).size == 7
        assert gaussian_kernel(1.5).size == 11

    def test_edge_replication(self):
        img = np.zeros((5, 9))
        img[:, 0] = 90.0
        out = convolve_gaussian(img, 1.0)
        # a replicated edge keeps the first column brighter than a zero-padded one would
        k = gaussian_kernel(1.0)
        assert out[2, 0] == pytest.approx(90.0 * k[3:].sum(), rel=1e-9)

    @pytest.mark.parametrize("sigma", [0.0, -1.0])
    def test_bad_sigma(self, sigma):
        with pytest.raises(ParameterError):
            convolve_gaussian(np.zeros((5, 5)), sigma)

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2 ** 31))
    def test_linearity(self, a, b, seed):
        g = np.random.default_rng(seed)
        i1, i2 = g.uniform(0, 255, (12, 15)), g.uniform(0, 255, (12, 15))
        lhs = convolve_gaussian(a * i1 + b * i2, 1.3)
        rhs = a * convolve_gaussian(i1, 1.3) + b * convolve_gaussian(i2, 1.3)
        assert np.max(np.abs(lhs - rhs)) < 1e-6


class TestSobel:
    def test_constant(self):
        assert np.all(sobel_gradients(np.full((6, 6), 40.0)).magnitude == 0)

    def test_vertical_step(self):
        img = np.zeros((8, 10))
        img[:, 5:] = 255.0
        g = sobel_gradients(img)
        assert np.all(g.gx[1:-1, 4] == 1020.0)
        assert np.all(g.gx[1:-1, 5] == 1020.0)
        assert np.all(g.gy == 0.0)

    def test_diagonal_ramp(self):
        ys, xs = np.mgrid[0:9, 0:11].astype(float)
        g = sobel_gradients(xs + ys)
        # each kernel sees (1 + 2 + 1) * (f(+1) - f(-1)) = 4 * 2
        assert np.all(g.gx[1:-1, 1:-1] == 8.0)
        assert np.all(g.gy[1:-1, 1:-1] == 8.0)

    def test_border_zero_and_magnitude(self, rng):
        g = sobel_gradients(rng.uniform(0, 255, (7, 9)))
        assert np.all(g.magnitude[[0, -1], :] == 0) and np.all(g.magnitude[:, [0, -1]] == 0)
        assert np.allclose(g.magnitude, np.sqrt(g.gx ** 2 + g.gy ** 2), atol=1e-9)

    def test_too_small(self):
        with pytest.raises(ParameterError):
            sobel_gradients(np.zeros((2, 5)))


class TestOtsu:
    def test_two_levels_tie_smallest(self):
        img = np.array([[50.0] * 8 + [200.0] * 8])
        assert otsu_threshold(img) == 50

    def test_bimodal_matches_scan(self, rng):
        vals = np.concatenate([rng.normal(60, 10, 3000), rng.normal(180, 10, 3000)])
        img = vals.reshape(60, 100)
        t = otsu_threshold(img)
        assert 90 <= t <= 150
        assert t == otsu_scan(quantize_256(img))

    def test_constant_raises(self):
        with pytest.raises(DegenerateInputError):
            otsu_threshold(np.full((4, 4), 9.0))

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.int64, (6, 7), elements=st.integers(0, 255)))
    def test_matches_scan_and_duplication(self, img):
        if np.unique(img).size < 2:
            return
        t = otsu_threshold(img)
        assert t == otsu_scan(img)
        assert otsu_threshold(np.concatenate([img, img])) == t

    def test_binarize(self):
        out = binarize(np.array([[10.0, 11.0, 200.0]]), 10)
        assert out.tolist() == [[0.0, 255.0, 255.0]]


class TestComponents:
    def test_two_bars(self):
        img = np.zeros((12, 20))
        img[1:4, 2:12] = 255
        img[8:11, 5:15] = 255
        comps = connected_components(img)
        assert [c.area for c in comps] == [30, 30]
        assert comps[0].rows.min() == 1  # equal areas: top-left first

    def test_all_foreground(self):
        comps = connected_components(np.full((5, 7), 255.0))
        assert len(comps) == 1 and comps[0].area == 35

    def test_empty(self):
        assert connected_components(np.zeros((4, 4))) == []

    def test_diagonal_is_connected(self):
        assert len(connected_components(np.eye(5) * 255)) == 1

    def test_non_binary_rejected(self):
        with pytest.raises(ParameterError):
            connected_components(np.array([[0.0, 128.0]]))

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.bool_, (9, 11)))
    def test_matches_flood_fill(self, mask):
        img = mask * 255.0
        comps = connected_components(img)
        areas = [c.area for c in comps]
        assert areas == flood_fill_areas(mask)
        assert sum(areas) == int(mask.sum())


class TestLineFit:
    def test_exact_line(self):
        fit = fit_line_least_squares([(x, 2 * x + 1) for x in range(10)])
        assert fit.slope == pytest.approx(2.0, abs=1e-9)
        assert fit.intercept == pytest.approx(1.0, abs=1e-9)

    def test_horizontal(self):
        fit = fit_line_least_squares([(x, 7.0) for x in range(5)])
        assert fit.slope == 0.0 and fit.angle_deg == 0.0

    def test_noisy_line_matches_closed_form(self, rng):
        x = np.arange(200, dtype=float)
        y = 0.1 * x + 5 + rng.normal(0, 0.5, 200)
        fit = fit_line_least_squares(np.column_stack([x, y]))
        ref = np.polyfit(x, y, 1)
        assert fit.slope == pytest.approx(0.1, abs=0.02)
        assert fit.slope == pytest.approx(ref[0], abs=1e-9)
        assert fit.intercept == pytest.approx(ref[1], abs=1e-7)

    def test_vertical_raises(self):
        with pytest.raises(DegenerateInputError):
            fit_line_least_squares([(3, 1), (3, 5), (3, 9)])
        with pytest.raises(ParameterError):
            fit_line_least_squares([(1, 1)])

    def test_angle_convention(self):
        # rows grow downward: a line falling to the right in the image rises in y-up terms
        assert LineFit(-1.0, 0.0).angle_deg == pytest.approx(45.0)
        assert LineFit(1.0, 0.0).angle_deg == pytest.approx(-45.0)

    def test_shifted(self):
        line = LineFit(0.5, 3.0)
        moved = line.shifted(4, 10)
        # a point (x, y) on the line is (x + 4, y + 10) in the shifted frame
        assert moved.y_at(2 + 4) == pytest.approx(line.y_at(2) + 10)

    def test_least_residual_against_probes(self, rng):
        pts = np.column_stack([np.arange(50.0), rng.normal(0, 3, 50) + 0.3 * np.arange(50.0)])
        fit = fit_line_least_squares(pts)
        best = line_residual_ss(fit, pts)
        for _ in range(100):
            probe = LineFit(fit.slope + rng.normal(0, 0.05), fit.intercept + rng.normal(0, 1))
            assert best <= line_residual_ss(probe, pts) + 1e-9
