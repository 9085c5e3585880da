import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgsv.errors import ConfigError, DegenerateCovarianceError
from pgsv.splats import (EPS_CHOL, CodecConfig, GaussianVideo, LayeredFrame,
                         SplatArray, cholesky_to_cov, cov_inverse_det,
                         level_view, load_checkpoint, save_checkpoint)

from conftest import random_scene


class TestCholeskyToCov:
    def test_identity(self):
        assert np.allclose(cholesky_to_cov((1, 0, 1)), np.eye(2))

    def test_diagonal(self):
        assert np.allclose(cholesky_to_cov((2, 0, 1)), [[4, 0], [0, 1]])

    def test_full(self):
        assert np.allclose(cholesky_to_cov((1, 1, 1)), [[1, 1], [1, 2]])

    @pytest.mark.parametrize("chol", [(0, 0, 1), (1, 0, 0), (-1, 0, 1), (1, 0, -2)])
    def test_nonpositive_diagonal_rejected(self, chol):
        with pytest.raises(DegenerateCovarianceError):
            cholesky_to_cov(chol)

    @given(l1=st.floats(EPS_CHOL, 100), l2=st.floats(-100, 100),
           l3=st.floats(EPS_CHOL, 100))
    @settings(max_examples=200, deadline=None)
    def test_always_positive_definite(self, l1, l2, l3):
        cov = cholesky_to_cov((l1, l2, l3))
        assert np.allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) > 0)


class TestCovInverseDet:
    def test_identity(self):
        inv, det = cov_inverse_det(np.eye(2))
        assert np.allclose(inv, np.eye(2)) and det == 1.0

    def test_diagonal(self):
        inv, det = cov_inverse_det([[4, 0], [0, 1]])
        assert np.allclose(inv, [[0.25, 0], [0, 1]]) and det == 4.0

    def test_closed_form(self):
        inv, det = cov_inverse_det([[1, 1], [1, 2]])
        assert np.allclose(inv, [[2, -1], [-1, 1]]) and det == 1.0

    def test_product_is_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            cov = cholesky_to_cov(
                (rng.uniform(0.1, 5), rng.uniform(-3, 3), rng.uniform(0.1, 5)))
            inv, _ = cov_inverse_det(cov)
            assert np.abs(cov @ inv - np.eye(2)).max() < 1e-9

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateCovarianceError):
            cov_inverse_det([[1e-7, 0], [0, 1e-7]])


def _frame(rng, counts, kind="I"):
    return LayeredFrame([random_scene(rng, n) for n in counts], kind, counts)


class TestLevelView:
    def test_base_only(self):
        frame = _frame(np.random.default_rng(0), (4, 4, 4))
        assert len(level_view(frame, 0)) == 4

    def test_full_union(self):
        frame = _frame(np.random.default_rng(0), (4, 4, 4))
        assert len(level_view(frame, 2)) == 12

    def test_view_equals_manual_concat(self):
        frame = _frame(np.random.default_rng(1), (5, 3, 7))
        view = level_view(frame, 1)
        manual = SplatArray.concat([frame.layers[0], frame.layers[1]])
        assert view.allclose(manual)

    def test_nested_multisets(self):
        frame = _frame(np.random.default_rng(2), (3, 3, 3))
        for lvl in range(2):
            lo = level_view(frame, lvl)
            hi = level_view(frame, lvl + 1)
            assert hi.pos[: len(lo)] is not None
            assert np.array_equal(hi.pos[: len(lo)], lo.pos)

    def test_out_of_range(self):
        frame = _frame(np.random.default_rng(0), (2, 2))
        with pytest.raises(IndexError):
            level_view(frame, 2)
        with pytest.raises(IndexError):
            level_view(frame, -1)


class TestCheckpoint:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(3)
        frames = [_frame(rng, (4, 5, 6), "I"), _frame(rng, (4, 5, 6), "P")]
        video = GaussianVideo(frames, 64, 48, [(48, 64)] * 3, "quality")
        config = CodecConfig(total_budget=15, budget_split=(4 / 15, 5 / 15, 6 / 15))
        buf = io.BytesIO()
        save_checkpoint(video, buf, config)
        buf.seek(0)
        loaded, cfg2 = load_checkpoint(buf)
        assert cfg2 is not None and cfg2.total_budget == 15
        assert loaded.width == 64 and loaded.height == 48
        for f1, f2 in zip(video.frames, loaded.frames):
            assert f1.frame_kind == f2.frame_kind
            for l1, l2 in zip(f1.layers, f2.layers):
                assert l1.allclose(l2)  # bit-exact float32 fields


class TestCodecConfig:
    def test_layer_budgets_sum(self):
        cfg = CodecConfig(total_budget=1000)
        assert sum(cfg.layer_budgets()) == 1000

    def test_aug_counts_reference_point(self):
        cfg = CodecConfig(total_budget=12000, budget_split=(1 / 3, 1 / 3, 1 / 3),
                          aug_prune_ratios=(0.2, 0.4, 0.4))
        assert cfg.layer_budgets() == (4000, 4000, 4000)
        assert cfg.aug_counts() == (800, 1600, 1600)

    def test_split_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            CodecConfig(budget_split=(0.5, 0.2, 0.2))

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            CodecConfig.from_dict({"definitely_not_a_field": 1})

    def test_gsp_interval_bounded_by_horizon(self):
        with pytest.raises(ConfigError):
            CodecConfig(gsp_interval=5000, gsp_horizon_pframe=1000)

    def test_resolution_mode_monotone(self):
        video = GaussianVideo([], 64, 64, [(37, 37), (52, 52), (64, 64)],
                              "resolution")
        rs = video.level_resolutions
        assert rs == sorted(rs)
