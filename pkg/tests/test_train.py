import numpy as np
import pytest

from pgsv.errors import ConfigError
from pgsv.optim import l2_loss
from pgsv.raster import render
from pgsv.splats import CodecConfig, LayeredFrame, SplatArray, level_view
from pgsv.train import (GroundTruthPyramid, build_pyramid, cyclic_level,
                        encode_sequence, gsp_prune, gsp_quota, init_iframe,
                        init_pframe, joint_loss, level_resolutions,
                        pruning_baseline_view, rng_for, select_keyframes,
                        train_frame, train_monolithic_baseline,
                        train_sequential_baseline)

from conftest import random_scene


def small_config(**kw):
    defaults = dict(num_layers=3, total_budget=30,
                    budget_split=(1 / 3, 1 / 3, 1 / 3),
                    aug_prune_ratios=(0.2, 0.4, 0.4), gsp_interval=10,
                    max_iters_iframe=300, max_iters_pframe=300,
                    convergence_window=20, lr_halving_period=100)
    defaults.update(kw)
    defaults.setdefault("gsp_horizon_iframe",
                        min(40, defaults["max_iters_iframe"] // 2))
    defaults.setdefault("gsp_horizon_pframe",
                        min(40, defaults["max_iters_pframe"] // 2))
    return CodecConfig(**defaults)


class TestLevelResolutions:
    def test_equal_thirds_1080p(self):
        res = level_resolutions(3, (1, 1, 1), (1080, 1920))
        assert res[0] == (624, 1109)   # sqrt(1/3) ladder
        assert res[2] == (1080, 1920)

    def test_middle_ratio(self):
        res = level_resolutions(3, (1, 1, 1), (1080, 1920))
        r1 = np.sqrt(2 / 3)
        assert res[1] == (int(np.floor(1080 * r1 + 0.5)),
                          int(np.floor(1920 * r1 + 0.5)))

    def test_top_level_exact(self):
        res = level_resolutions(100, (10, 40, 50), (123, 457))
        assert res[-1] == (123, 457)

    def test_zero_budget_rejected(self):
        with pytest.raises(ConfigError):
            level_resolutions(10, (0, 5, 5), (64, 64))


class TestCyclicLevel:
    def test_reference_sequence(self):
        assert [cyclic_level(k, 3) for k in range(3)] == [0, 1, 0]

    def test_modulo(self):
        assert cyclic_level(7, 3) == 1

    def test_double_cycle_coverage(self):
        levels = [cyclic_level(k, 3) for k in range(4)]
        assert levels.count(0) == 2 and levels.count(1) == 2

    def test_coverage_over_multiple(self):
        num_levels = 4
        m = 3 * (num_levels - 1)
        seq = [cyclic_level(k, num_levels) for k in range(m)]
        for lvl in range(num_levels - 1):
            assert seq.count(lvl) == m // (num_levels - 1)

    def test_single_level_rejected(self):
        with pytest.raises(ConfigError):
            cyclic_level(0, 1)


class TestSelectKeyframes:
    def test_constant_video(self):
        frames = [np.full((8, 8, 3), 0.5)] * 4
        assert select_keyframes(frames, 0.08) == ["I", "P", "P", "P"]

    def test_hard_cut_flagged(self):
        rng = np.random.default_rng(0)
        scene_a = rng.random((16, 16, 3))
        frames = [scene_a] * 5 + [1.0 - scene_a] * 3
        flags = select_keyframes(frames, 0.1)
        assert flags[5] == "I"
        assert flags == ["I", "P", "P", "P", "P", "I", "P", "P"]

    def test_single_image(self):
        assert select_keyframes([np.zeros((4, 4, 3))], 0.08) == ["I"]


class TestInit:
    def test_iframe_counts_reference_point(self):
        cfg = CodecConfig(total_budget=12000)
        frame = init_iframe((4000, 4000, 4000), (800, 1600, 1600),
                            rng_for(0, 1, 0), cfg)
        assert frame.layer_counts() == (4800, 5600, 5600)

    def test_iframe_deterministic(self):
        cfg = small_config()
        a = init_iframe((10, 10, 10), (2, 4, 4), rng_for(5, 1, 0), cfg)
        b = init_iframe((10, 10, 10), (2, 4, 4), rng_for(5, 1, 0), cfg)
        for la, lb in zip(a.layers, b.layers):
            assert la.allclose(lb)

    def test_iframe_positions_in_unit_square(self):
        cfg = small_config()
        frame = init_iframe((50, 50, 50), (10, 20, 20), rng_for(1, 1, 0), cfg)
        for layer in frame.layers:
            assert layer.pos.min() >= 0.0 and layer.pos.max() <= 1.0

    def test_pframe_zero_aug_copies(self):
        cfg = small_config()
        prev = init_iframe((10, 10, 10), (0, 0, 0), rng_for(2, 1, 0), cfg)
        nxt = init_pframe(prev, (0, 0, 0), rng_for(2, 1, 1), cfg)
        for la, lb in zip(prev.layers, nxt.layers):
            assert la.allclose(lb)

    def test_pframe_counts_add(self):
        cfg = small_config()
        prev = init_iframe((10, 10, 10), (0, 0, 0), rng_for(3, 1, 0), cfg)
        nxt = init_pframe(prev, (2, 4, 4), rng_for(3, 1, 1), cfg)
        assert nxt.layer_counts() == (12, 14, 14)

    def test_pframe_copied_prefix_renders_identically(self):
        cfg = small_config()
        prev = init_iframe((10, 10, 10), (0, 0, 0), rng_for(4, 1, 0), cfg)
        nxt = init_pframe(prev, (2, 2, 2), rng_for(4, 1, 1), cfg)
        img_prev = render(level_view(prev, 2), 24, 24)
        copied = SplatArray.concat([l.take(np.arange(10)) for l in nxt.layers])
        img_copied = render(copied, 24, 24)
        assert np.array_equal(img_prev, img_copied)


class TestGSPSchedule:
    def test_reference_arithmetic(self):
        # 5600 -> 4000 with Z=100, K=1000: 160 removed at each of 10 events
        removed = [gsp_quota(k, 1600, 100, 1000) for k in range(0, 1000, 100)]
        assert removed == [160] * 10
        assert sum(removed) == 1600

    def test_uneven_final_event(self):
        quotas = [gsp_quota(k, 105, 10, 100) for k in range(0, 100, 10)]
        assert sum(quotas) == 105
        assert max(quotas) == 11

    def test_off_schedule_no_change(self):
        rng = np.random.default_rng(0)
        frame = LayeredFrame([random_scene(rng, 20)], "I", (10,))
        out = gsp_prune(frame, 7, (10, 100), (10,))
        assert out is frame

    def test_zero_weight_pruned_first(self):
        rng = np.random.default_rng(1)
        layer = random_scene(rng, 10)
        layer.weight[:] = np.abs(layer.weight) + 0.5
        layer.weight[3] = 0.0
        frame = LayeredFrame([layer], "I", (9,))
        out = gsp_prune(frame, 0, (10, 100), (1,))
        assert len(out.layers[0]) == 9
        assert 0.0 not in out.layers[0].weight

    def test_quota_exceeding_layer_rejected(self):
        rng = np.random.default_rng(2)
        frame = LayeredFrame([random_scene(rng, 5)], "I", (0,))
        with pytest.raises(ConfigError):
            gsp_prune(frame, 0, (10, 10), (50,))


class TestJointLoss:
    def _setup(self, seed=0):
        cfg = small_config()
        rng = np.random.default_rng(seed)
        frame = LayeredFrame([random_scene(rng, 10) for _ in range(3)], "I",
                             (10, 10, 10))
        target = rng.random((20, 20, 3))
        pyramid = build_pyramid(target, cfg)
        return frame, pyramid

    def test_perfect_match_zero_loss(self):
        frame, _ = self._setup()
        levels = [np.asarray(render(level_view(frame, l), 20, 20))
                  for l in range(3)]
        pyramid = GroundTruthPyramid(levels, [(20, 20)] * 3)
        loss, grads = joint_loss(frame, pyramid, k=0)
        assert loss == pytest.approx(0.0, abs=1e-20)
        assert not grads.pos.any() and not grads.chol.any()

    def test_decomposes_into_two_l2_terms(self):
        frame, pyramid = self._setup(1)
        for k in (0, 1):
            loss, _ = joint_loss(frame, pyramid, k=k)
            lk = cyclic_level(k, 3)
            top = render(level_view(frame, 2), 20, 20)
            mid = render(level_view(frame, lk), 20, 20)
            l_top, _ = l2_loss(top, pyramid.levels[2])
            l_mid, _ = l2_loss(mid, pyramid.levels[lk])
            assert loss == pytest.approx(l_top + l_mid, rel=1e-12)

    def test_top_layer_gradients_only_from_top_render(self):
        frame, pyramid = self._setup(2)
        loss, grads = joint_loss(frame, pyramid, k=0)  # intermediate = level 0
        top_view = level_view(frame, 2)
        _, grad_img = l2_loss(np.asarray(render(top_view, 20, 20)),
                              pyramid.levels[2])
        from pgsv.raster import render_backward
        top_only = render_backward(top_view, 20, 20, grad_img)
        assert np.allclose(grads.pos[20:], top_only.pos[20:])
        assert not np.allclose(grads.pos[:10], top_only.pos[:10])

    def test_perturbing_top_layer_keeps_intermediate_term(self):
        frame, pyramid = self._setup(3)
        lk = cyclic_level(0, 3)
        mid_before = render(level_view(frame, lk), 20, 20)
        frame.layers[2].color[0] += 1.0
        mid_after = render(level_view(frame, lk), 20, 20)
        assert np.array_equal(mid_before, mid_after)


class TestTrainFrame:
    def test_budget_conservation(self):
        cfg = small_config(max_iters_iframe=60, max_iters_pframe=60)
        target = np.full((16, 16, 3), 0.5)
        pyramid = build_pyramid(target, cfg)
        init = init_iframe(cfg.layer_budgets(), cfg.aug_counts(),
                           rng_for(0, 1, 0), cfg)
        frame, report = train_frame(init, pyramid, cfg)
        assert frame.layer_counts() == cfg.layer_budgets()
        assert report.layer_counts == cfg.layer_budgets()

    def test_zero_gradient_landscape_converges_quickly(self):
        cfg = small_config(aug_prune_ratios=(0.0, 0.0, 0.0))
        init = init_iframe(cfg.layer_budgets(), (0, 0, 0), rng_for(1, 1, 0), cfg)
        levels = [np.asarray(render(level_view(init, l), 16, 16))
                  for l in range(3)]
        pyramid = GroundTruthPyramid(levels, [(16, 16)] * 3)
        frame, report = train_frame(init, pyramid, cfg)
        assert report.converged
        assert report.iterations <= cfg.convergence_window + cfg.num_layers + 1

    def test_deterministic_replay(self):
        cfg = small_config(max_iters_iframe=50, max_iters_pframe=50)
        rng = np.random.default_rng(2)
        target = rng.random((16, 16, 3))
        pyramid = build_pyramid(target, cfg)

        def run():
            init = init_iframe(cfg.layer_budgets(), cfg.aug_counts(),
                               rng_for(9, 1, 0), cfg)
            frame, _ = train_frame(init, pyramid, cfg)
            return SplatArray.concat(frame.layers)

        assert run().allclose(run())


class TestEncodeSequence:
    def test_single_image_is_iframe(self):
        cfg = small_config(max_iters_iframe=40, max_iters_pframe=40)
        rng = np.random.default_rng(0)
        video, reports = encode_sequence([rng.random((16, 16, 3))], cfg, seed=0)
        assert [f.frame_kind for f in video.frames] == ["I"]

    def test_hard_cut_gets_fresh_iframe(self):
        cfg = small_config(max_iters_iframe=40, max_iters_pframe=40)
        rng = np.random.default_rng(1)
        a = rng.random((16, 16, 3))
        frames = [a, a, 1.0 - a]
        video, _ = encode_sequence(frames, cfg, seed=0)
        assert [f.frame_kind for f in video.frames] == ["I", "P", "I"]

    def test_seed_reproducibility(self):
        cfg = small_config(max_iters_iframe=40, max_iters_pframe=40)
        rng = np.random.default_rng(2)
        frames = [rng.random((16, 16, 3)) for _ in range(2)]
        v1, _ = encode_sequence(frames, cfg, seed=3)
        v2, _ = encode_sequence(frames, cfg, seed=3)
        for f1, f2 in zip(v1.frames, v2.frames):
            for l1, l2 in zip(f1.layers, f2.layers):
                assert l1.allclose(l2)


class TestBaselines:
    def test_sequential_base_equals_monolithic_base(self):
        # stage 0 of Sequential and the base-budget Monolithic model follow
        # the same seeded training path, bit for bit
        cfg = small_config(max_iters_iframe=60, max_iters_pframe=60)
        rng = np.random.default_rng(3)
        img = rng.random((16, 16, 3))
        seq, _ = train_sequential_baseline([img], cfg, seed=4)
        monos = train_monolithic_baseline([img], cfg, seed=4)
        assert seq.frames[0].layers[0].allclose(monos[0].frames[0].layers[0])

    def test_monolithic_budgets_are_cumulative(self):
        cfg = small_config(max_iters_iframe=40, max_iters_pframe=40)
        rng = np.random.default_rng(4)
        monos = train_monolithic_baseline([rng.random((16, 16, 3))], cfg, seed=0)
        budgets = np.cumsum(cfg.layer_budgets())
        assert [len(v.frames[0].layers[0]) for v in monos] == list(budgets)

    def test_monolithic_independent_models(self):
        cfg = small_config(max_iters_iframe=40, max_iters_pframe=40)
        rng = np.random.default_rng(5)
        monos = train_monolithic_baseline([rng.random((16, 16, 3))], cfg, seed=0)
        a = monos[0].frames[0].layers[0]
        b = monos[1].frames[0].layers[0]
        assert len(a) != len(b)

    def test_pruning_view_identity_and_empty(self):
        scene = random_scene(np.random.default_rng(6), 12)
        frame = LayeredFrame([scene], "I", (12,))
        full = pruning_baseline_view(frame, 12)
        assert full.allclose(scene)
        assert len(pruning_baseline_view(frame, 0)) == 0

    def test_pruning_view_keeps_largest_weights(self):
        scene = random_scene(np.random.default_rng(7), 10)
        scene.weight[:] = np.arange(10, dtype=np.float32) - 5
        kept = pruning_baseline_view(scene, 3)
        assert sorted(np.abs(kept.weight).tolist()) == [4.0, 4.0, 5.0]

    def test_pruning_view_bounds(self):
        scene = random_scene(np.random.default_rng(8), 4)
        with pytest.raises(IndexError):
            pruning_baseline_view(scene, 5)
