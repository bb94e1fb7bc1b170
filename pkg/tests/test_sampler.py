import random

import numpy as np
import pytest

from infigrid.denoise import DenoiserSpec
from infigrid.grid import Region, WindowLayout, windows_overlapping
from infigrid.noise import NoiseStream, noise_region
from infigrid.sampler import SamplerConfig, SamplerState, sample
from infigrid.store import TileStore


def _config(**kw):
    kw.setdefault("steps", 2)
    kw.setdefault("layout", WindowLayout(16, 8))
    kw.setdefault("denoiser", DenoiserSpec(kind="shrink_smooth", radius=1,
                                           lambdas=(0.6, 0.4)))
    kw.setdefault("seed", 21)
    return SamplerConfig(**kw)


class TestQuery:
    def test_identity_single_step_unit_weights_equals_noise(self):
        cfg = _config(steps=1, denoiser=DenoiserSpec(kind="identity"), epsilon=1.0)
        state = SamplerState(cfg, TileStore())
        r = Region(-11, 6, 32, 24)
        got = state.query(0, r)
        want = noise_region(NoiseStream(cfg.seed), r)
        np.testing.assert_array_equal(got, want)

    def test_noise_level_query(self):
        cfg = _config()
        state = SamplerState(cfg, TileStore())
        r = Region(2, 2, 8, 8)
        np.testing.assert_array_equal(state.query(cfg.steps, r),
                                      noise_region(NoiseStream(cfg.seed), r))

    def test_repeat_query_bit_identical(self):
        state = SamplerState(_config(), TileStore())
        r = Region(0, 0, 20, 20)
        np.testing.assert_array_equal(state.query(0, r), state.query(0, r))

    def test_far_away_queries_do_not_perturb(self):
        r = Region(5, 5, 16, 16)
        fresh = SamplerState(_config(), TileStore()).query(0, r)
        state = SamplerState(_config(), TileStore())
        state.query(0, Region(5000, -7000, 24, 24))
        state.query(1, Region(-3000, 4000, 16, 16))
        np.testing.assert_array_equal(state.query(0, r), fresh)

    def test_step_range_validated(self):
        state = SamplerState(_config(), TileStore())
        with pytest.raises(ValueError):
            state.query(3, Region(0, 0, 4, 4))

    def test_custom_base_field(self):
        def base(r, channels):
            return np.full((channels, r.height, r.width), 2.0, dtype=np.float32)

        cfg = _config(steps=1, denoiser=DenoiserSpec(kind="identity"),
                      epsilon=1.0, base=base)
        out = SamplerState(cfg, TileStore()).query(0, Region(0, 0, 8, 8))
        np.testing.assert_array_equal(out, 2.0)


class TestSample:
    def test_disjoint_vs_bounding_box(self):
        a = Region(0, 0, 16, 16)
        b = Region(32, 0, 16, 16)
        box = a.bounding_union(b)
        outs = []
        store = TileStore()
        state = SamplerState(_config(name="ab"), store)
        outs.append((state.query(0, a), state.query(0, b)))
        whole = SamplerState(_config(name="box"), TileStore()).query(0, box)
        np.testing.assert_array_equal(outs[0][0], whole[:, :, :16])
        np.testing.assert_array_equal(outs[0][1], whole[:, :, 32:])

    def test_direct_vs_indirect(self):
        r = Region(-6, -6, 28, 28)
        a = sample(_config(cache_method="direct"), TileStore(), r)
        b = sample(_config(cache_method="indirect"), TileStore(tile_size=16), r)
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_output(self):
        r = Region(0, 0, 16, 16)
        a = sample(_config(seed=1), TileStore(), r)
        b = sample(_config(seed=2), TileStore(), r)
        assert np.any(np.signbit(a) != np.signbit(b))


class TestDenoiserCallCount:
    def test_single_window_disjoint_single_step(self):
        cfg = _config(steps=1, layout=WindowLayout(16, 16))
        state = SamplerState(cfg, TileStore())
        state.query(0, Region(0, 0, 16, 16))
        assert state.total_denoiser_calls() == 1

    def test_bound_and_translation_invariance(self):
        layout = WindowLayout(16, 8)
        counts = set()
        for x, y in ((0, 0), (8, -16), (80000, -64), (-10 ** 6, 10 ** 6)):
            state = SamplerState(_config(), TileStore())
            state.query(0, Region(x, y, 16, 16))
            counts.add(state.total_denoiser_calls())
        assert counts == {34}  # M + M^2 overlap-deduplicated: 9 + 25
        assert max(counts) <= 90

    def test_repeat_costs_nothing(self):
        state = SamplerState(_config(), TileStore())
        r = Region(0, 0, 16, 16)
        state.query(0, r)
        n = state.total_denoiser_calls()
        state.query(0, r)
        assert state.total_denoiser_calls() == n

    def test_per_step_counters(self):
        state = SamplerState(_config(), TileStore())
        state.query(0, Region(0, 0, 16, 16))
        assert state.denoiser_call_count(0) == 9
        assert state.denoiser_call_count(1) == 25


class TestPlanRounds:
    def test_single_level_one_round(self):
        cfg = _config(steps=1)
        state = SamplerState(cfg, TileStore())
        r = Region(0, 0, 16, 16)
        sched = state.plan_rounds(0, r)
        assert len(sched) == 1
        assert [idx for idx, lvl in sched[0]] == windows_overlapping(cfg.layout_for(0), r)
        assert all(lvl == 0 for _, lvl in sched[0])

    def test_round_count_bounded_by_steps(self):
        for steps in (1, 2, 3):
            state = SamplerState(_config(steps=steps,
                                         denoiser=DenoiserSpec(lambdas=(0.5,))),
                                 TileStore())
            sched = state.plan_rounds(0, Region(0, 0, 24, 24))
            assert len(sched) <= steps

    def test_deeper_levels_first(self):
        state = SamplerState(_config(steps=3, denoiser=DenoiserSpec(lambdas=(0.5,))),
                             TileStore())
        sched = state.plan_rounds(0, Region(0, 0, 16, 16))
        levels = [batch[0][1] for batch in sched]
        assert levels == sorted(levels, reverse=True)

    def test_shuffled_execution_bit_identical(self):
        r = Region(0, 0, 24, 24)
        sequential = SamplerState(_config(name="seq"), TileStore()).query(0, r)
        rng = random.Random(5)
        for _ in range(5):
            store = TileStore()
            state = SamplerState(_config(name="shuf"), store)
            state.execute_rounds(state.plan_rounds(0, r), rng=rng)
            np.testing.assert_array_equal(state.query(0, r), sequential)

    def test_threaded_execution_bit_identical(self):
        r = Region(0, 0, 24, 24)
        sequential = SamplerState(_config(name="seq"), TileStore()).query(0, r)
        store = TileStore()
        state = SamplerState(_config(name="thr"), store)
        state.execute_rounds(state.plan_rounds(0, r), max_workers=4)
        np.testing.assert_array_equal(state.query(0, r), sequential)

    def test_nothing_pending_after_query(self):
        state = SamplerState(_config(), TileStore())
        r = Region(0, 0, 16, 16)
        state.query(0, r)
        assert state.plan_rounds(0, r) == []


class TestConfigValidation:
    def test_steps_positive(self):
        with pytest.raises(ValueError):
            _config(steps=0)

    def test_weights_must_be_positive(self):
        w = np.zeros((16, 16))
        cfg = _config(weights=(w, w))
        with pytest.raises(ValueError):
            cfg.weight_for(0)

    def test_weight_shape_checked(self):
        cfg = _config(weights=(np.ones((4, 4)), np.ones((4, 4))))
        with pytest.raises(ValueError):
            cfg.weight_for(0)

    def test_per_step_layouts(self):
        cfg = _config(layout=(WindowLayout(8, 4), WindowLayout(16, 8)))
        assert cfg.layout_for(0) == WindowLayout(8, 4)
        assert cfg.layout_for(1) == WindowLayout(16, 8)
        SamplerState(cfg, TileStore()).query(0, Region(0, 0, 8, 8))

    def test_bad_base_shape(self):
        cfg = _config(steps=1, base=lambda r, c: np.zeros((1, 2, 2)))
        with pytest.raises(Exception):
            SamplerState(cfg, TileStore()).query(0, Region(0, 0, 8, 8))
