import numpy as np
import pytest

from infigrid.grid import (Region, WindowLayout, linear_weight_profile,
                           linear_weight_window, max_window_overlap,
                           region_union_cover, window_region,
                           windows_overlapping)


class TestRegion:
    def test_half_open_properties(self):
        r = Region(-3, 2, 10, 4)
        assert (r.x1, r.y1, r.area) == (7, 6, 40)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Region(0, 0, 0, 5)

    def test_intersection_and_containment(self):
        a = Region(0, 0, 10, 10)
        b = Region(5, 5, 10, 10)
        assert a.intersection(b) == Region(5, 5, 5, 5)
        assert a.intersection(Region(20, 20, 2, 2)) is None
        assert a.contains(Region(1, 1, 4, 4))
        assert not a.contains(b)

    def test_scale_down_rounds_outward(self):
        assert Region(-1, 0, 3, 4).scale_down(2) == Region(-1, 0, 2, 2)
        assert Region(0, 0, 4, 4).scale_down(2) == Region(0, 0, 2, 2)
        assert Region(1, 1, 1, 1).scale_down(4) == Region(0, 0, 1, 1)


class TestWindowRegion:
    def test_origin_window(self):
        layout = WindowLayout(16, 8)
        assert window_region(layout, (0, 0)) == Region(0, 0, 16, 16)

    def test_signed_index(self):
        layout = WindowLayout(16, 8)
        assert window_region(layout, (-1, 2)) == Region(-8, 16, 16, 16)

    def test_disjoint_tiling(self):
        layout = WindowLayout(4, 4)
        assert window_region(layout, (1, 0)) == Region(4, 0, 4, 4)

    def test_offset(self):
        layout = WindowLayout(8, 4, offset=(3, -2))
        assert window_region(layout, (0, 0)) == Region(3, -2, 8, 8)

    def test_invalid_layouts(self):
        with pytest.raises(ValueError):
            WindowLayout(0, 1)
        with pytest.raises(ValueError):
            WindowLayout(8, 9)
        with pytest.raises(ValueError):
            WindowLayout(8, 0)


class TestWindowsOverlapping:
    def test_nine_neighbors(self):
        layout = WindowLayout(16, 8)
        got = windows_overlapping(layout, Region(0, 0, 16, 16))
        assert set(got) == {(i, j) for j in (-1, 0, 1) for i in (-1, 0, 1)}
        assert len(got) == 9

    def test_disjoint_single(self):
        assert windows_overlapping(WindowLayout(4, 4), Region(0, 0, 4, 4)) == [(0, 0)]

    def test_single_pixel(self):
        got = windows_overlapping(WindowLayout(16, 8), Region(5, 5, 1, 1))
        assert set(got) == {(-1, -1), (-1, 0), (0, -1), (0, 0)}

    def test_canonical_order(self):
        got = windows_overlapping(WindowLayout(16, 8), Region(-30, -30, 70, 55))
        assert got == sorted(got, key=lambda idx: (idx[1], idx[0]))

    def test_exactness_random(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            layout = WindowLayout(int(rng.integers(1, 20)), 1, tuple(rng.integers(-5, 5, 2)))
            layout = WindowLayout(layout.window, int(rng.integers(1, layout.window + 1)),
                                  layout.offset)
            r = Region(int(rng.integers(-40, 40)), int(rng.integers(-40, 40)),
                       int(rng.integers(1, 30)), int(rng.integers(1, 30)))
            got = set(windows_overlapping(layout, r))
            for idx in got:
                assert window_region(layout, idx).intersection(r) is not None
            # boundary indices just outside must not intersect
            for idx in got:
                for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    n = (idx[0] + di, idx[1] + dj)
                    if n not in got:
                        assert window_region(layout, n).intersection(r) is None


class TestMaxWindowOverlap:
    def test_listed_values(self):
        assert max_window_overlap(WindowLayout(16, 8)) == 9
        assert max_window_overlap(WindowLayout(4, 4)) == 1
        assert max_window_overlap(WindowLayout(16, 4)) == 49

    def test_bound_holds_for_random_windows(self):
        rng = np.random.default_rng(11)
        for window, stride in ((16, 8), (12, 5), (7, 3), (9, 9)):
            layout = WindowLayout(window, stride)
            m = max_window_overlap(layout)
            for _ in range(250):
                idx = (int(rng.integers(-1000, 1000)), int(rng.integers(-1000, 1000)))
                k = windows_overlapping(layout, window_region(layout, idx))
                assert len(k) <= m


class TestCoverage:
    def test_every_pixel_covered(self):
        layout = WindowLayout(13, 6, offset=(-4, 9))
        r = Region(-57, 31, 80, 80)
        hits = np.zeros((r.height, r.width), dtype=int)
        for idx in windows_overlapping(layout, r):
            ov = window_region(layout, idx).intersection(r)
            hits[ov.y0 - r.y0:ov.y1 - r.y0, ov.x0 - r.x0:ov.x1 - r.x0] += 1
        assert (hits >= 1).all()


class TestRegionUnionCover:
    def test_overlapping(self):
        got = region_union_cover(WindowLayout(16, 8), Region(0, 0, 16, 16))
        assert got == Region(-8, -8, 32, 32)

    def test_disjoint(self):
        assert region_union_cover(WindowLayout(4, 4), Region(0, 0, 4, 4)) == Region(0, 0, 4, 4)

    def test_single_pixel(self):
        got = region_union_cover(WindowLayout(16, 8), Region(5, 5, 1, 1))
        assert got == Region(-8, -8, 24, 24)


class TestWeights:
    def test_profile_odd(self):
        np.testing.assert_allclose(linear_weight_profile(3, 0.01), [0.01, 1.0, 0.01])
        np.testing.assert_allclose(linear_weight_profile(5, 0.2), [0.2, 0.6, 1.0, 0.6, 0.2])

    def test_profile_single_sample(self):
        np.testing.assert_array_equal(linear_weight_profile(1, 0.3), [1.0])

    def test_even_flat_peak(self):
        w = linear_weight_profile(6, 0.1)
        assert w[2] == w[3] == 1.0
        np.testing.assert_allclose(w, w[::-1])

    def test_window_separable_and_positive(self):
        w2 = linear_weight_window(3, 0.01)
        assert w2[1, 1] == 1.0
        assert w2[0, 0] == pytest.approx(0.0001)
        assert (w2 > 0).all()
        np.testing.assert_allclose(w2, w2.T)
        np.testing.assert_allclose(w2, w2[::-1, ::-1])

    def test_epsilon_validation(self):
        with pytest.raises(ValueError):
            linear_weight_profile(5, 0.0)
        with pytest.raises(ValueError):
            linear_weight_profile(5, -0.2)
        with pytest.raises(ValueError):
            linear_weight_profile(5, 1.5)
