import hashlib
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from avse_tongue.distill import (KDConfig, check_tap_shapes, kd_total, mse_kd_loss, similarity_matrices,
                                 spkd_loss, train_student)
from avse_tongue.errors import ConfigError, DimensionError
from avse_tongue.senet import LossWeights, ModelConfig, SENet
from avse_tongue.training import TrainConfig


def _taps(shapes, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return [torch.randn(*s, generator=g, dtype=dtype) for s in shapes]


SHAPES = [(3, 2, 4, 5), (3, 4, 4, 3), (3, 1, 4, 2)]


def _gram_oracle(tap):
    # double loop over batch pairs, then row normalization
    x = tap.numpy()
    b, c, s, f = x.shape
    out = np.zeros((s, b, b))
    for j in range(s):
        rows = [x[i, :, j, :].reshape(-1) for i in range(b)]
        for p in range(b):
            for q in range(b):
                out[j, p, q] = sum(rows[p][k] * rows[q][k] for k in range(c * f))
            n = np.sqrt(np.sum(out[j, p] ** 2))
            if n >= 1e-12:
                out[j, p] /= n
    return out


def _spkd_oracle(tea, stu):
    b = tea[0].shape[0]
    return sum(np.sum((_gram_oracle(t) - _gram_oracle(s)) ** 2) for t, s in zip(tea, stu)) / b ** 2


def _mse_oracle(tea, stu, reduction):
    total = 0.0
    for t, s in zip(tea, stu):
        d = (t.numpy() - s.numpy()).reshape(-1)
        sq = sum(v * v for v in d)
        total += sq / d.size if reduction == "mean" else sq
    return total


class TestSimilarity:
    def test_single_item_is_one(self):
        g = similarity_matrices(_taps([(1, 3, 5, 4)])[0])
        assert torch.equal(g, torch.ones(5, 1, 1, dtype=g.dtype))

    def test_duplicate_items(self):
        t = _taps([(1, 2, 3, 4)])[0]
        g = similarity_matrices(torch.cat([t, t]))
        torch.testing.assert_close(g[:, 0], g[:, 1])
        torch.testing.assert_close(g[:, 0, 0], g[:, 0, 1])

    @pytest.mark.parametrize("seed", range(3))
    def test_oracle(self, seed):
        t = _taps([(3, 2, 4, 5)], seed)[0]
        np.testing.assert_allclose(similarity_matrices(t).numpy(), _gram_oracle(t), atol=1e-6)

    def test_unit_rows(self):
        g = similarity_matrices(_taps([(4, 3, 6, 2)])[0])
        torch.testing.assert_close(g.norm(dim=-1), torch.ones(6, 4, dtype=g.dtype))

    def test_zero_row_stays_zero(self):
        t = _taps([(3, 2, 4, 5)])[0]
        t[1] = 0.0
        g = similarity_matrices(t)
        assert torch.isfinite(g).all()
        assert not g[:, 1].any()


class TestSpkd:
    def test_equal_taps(self):
        t = _taps(SHAPES)
        assert spkd_loss(t, [x.clone() for x in t]).item() == 0.0

    def test_single_item_batch(self):
        shapes = [(1,) + s[1:] for s in SHAPES]
        assert spkd_loss(_taps(shapes, 0), _taps(shapes, 1)).item() == 0.0

    def test_hand_case(self):
        tea = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64).reshape(2, 1, 1, 2)
        stu = torch.tensor([[0.3, 0.4], [0.3, 0.4]], dtype=torch.float64).reshape(2, 1, 1, 2)
        # G_tea = I, G_stu rows are (1, 1)/sqrt(2); |I - G_stu|^2 = 4 - 2 sqrt(2), over b^2 = 4
        assert spkd_loss([tea], [stu]).item() == pytest.approx(1 - math.sqrt(2) / 2, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_oracle(self, seed):
        tea, stu = _taps(SHAPES, seed), _taps(SHAPES, seed + 100)
        assert spkd_loss(tea, stu).item() == pytest.approx(_spkd_oracle(tea, stu), abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            spkd_loss(_taps(SHAPES), _taps(SHAPES[:2]))
        with pytest.raises(DimensionError):
            spkd_loss(_taps([(3, 2, 4, 5)]), _taps([(3, 2, 4, 6)]))

    def test_feature_permutation_invariance(self):
        tea, stu = _taps(SHAPES, 1), _taps(SHAPES, 2)
        base = spkd_loss(tea, stu)
        perm = [torch.randperm(t.shape[-1]) for t in tea]
        moved = spkd_loss([t[..., p] for t, p in zip(tea, perm)], [s[..., p] for s, p in zip(stu, perm)])
        assert moved.item() == pytest.approx(base.item(), abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), b=st.integers(1, 4))
    def test_non_negative(self, seed, b):
        shapes = [(b, 2, 3, 4)]
        assert spkd_loss(_taps(shapes, seed), _taps(shapes, seed + 1)).item() >= 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient(self, seed):
        tea = _taps([(2, 2, 3, 3), (2, 1, 3, 2)], seed)
        stu = [t.requires_grad_() for t in _taps([(2, 2, 3, 3), (2, 1, 3, 2)], seed + 50)]
        assert torch.autograd.gradcheck(lambda *s: spkd_loss(tea, list(s)), stu, eps=1e-6, atol=0, rtol=1e-4)


class TestMseKd:
    def test_equal_taps(self):
        t = _taps(SHAPES)
        assert mse_kd_loss(t, [x.clone() for x in t], "sum").item() == 0.0

    def test_constant_offset_sum(self):
        tea = _taps(SHAPES)
        stu = [x.clone() for x in tea]
        stu[1] = stu[1] + 1.0
        assert mse_kd_loss(tea, stu, "sum").item() == pytest.approx(stu[1].numel())
        assert mse_kd_loss(tea, stu, "mean").item() == pytest.approx(1.0)

    @pytest.mark.parametrize("reduction", ["mean", "sum"])
    @pytest.mark.parametrize("seed", range(3))
    def test_oracle(self, seed, reduction):
        tea, stu = _taps(SHAPES, seed), _taps(SHAPES, seed + 7)
        assert mse_kd_loss(tea, stu, reduction).item() == pytest.approx(_mse_oracle(tea, stu, reduction),
                                                                        abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse_kd_loss(_taps([(2, 2, 2, 2)]), _taps([(2, 2, 2, 3)]))


class TestKdTotal:
    def test_zero_weights(self):
        assert kd_total(0.7, 3.0, 5.0, KDConfig(0.0, 0.0)) == 0.7

    def test_zero_components(self):
        assert kd_total(0.0, 0.0, 0.0, KDConfig(2.0, 3.0)) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_arithmetic(self, seed):
        se, m, s, d1, d2 = np.random.default_rng(seed).uniform(0, 2, 5)
        assert kd_total(se, m, s, KDConfig(d1, d2)) == pytest.approx(se + d1 * m + d2 * s, abs=1e-12)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            KDConfig(delta1=-0.1)
        with pytest.raises(ConfigError):
            KDConfig(mse_reduction="median")
        w = LossWeights(delta1=0.3, delta2=0.4)
        assert (KDConfig.from_weights(w).delta1, KDConfig.from_weights(w).delta2) == (0.3, 0.4)


def _sample(cfg, s=8):
    g = torch.Generator().manual_seed(0)
    return {"noisy": torch.randn(2, 2, cfg.freq_bins, s, generator=g),
            "lip3": torch.rand(2, 3, s, cfg.image_height, cfg.image_width, generator=g),
            "tongue3": torch.rand(2, 3, s, cfg.image_height, cfg.image_width, generator=g)}


def _hash(model):
    h = hashlib.sha256()
    for k, v in sorted(model.state_dict().items()):
        h.update(k.encode())
        h.update(v.detach().cpu().numpy().tobytes())
    return h.hexdigest()


class TestStudentTraining:
    def test_tap_shape_check(self):
        teacher = SENet(ModelConfig.toy()).eval()
        student = SENet(ModelConfig.toy("audio-lip", feature_channels=(8, 8, 8, 16, 16, 16, 16))).eval()
        with pytest.raises(ConfigError):
            check_tap_shapes(teacher, student, _sample(teacher.cfg))
        check_tap_shapes(teacher, SENet(ModelConfig.toy("audio-lip")).eval(), _sample(teacher.cfg))

    def _cfgs(self, cache):
        img = dict(image_height=cache.gen_cfg.image_height, image_width=cache.gen_cfg.image_width)
        return ModelConfig.toy("audio-lip-tongue", **img), ModelConfig.toy("audio-lip", **img)

    def test_zero_epochs(self, small_cache):
        t_cfg, s_cfg = self._cfgs(small_cache)
        res = train_student(SENet(t_cfg), s_cfg, small_cache, TrainConfig(epochs=0))
        assert res.log == [] and isinstance(res.model, SENet)

    def test_teacher_unchanged_and_logged(self, small_cache, tmp_path):
        t_cfg, s_cfg = self._cfgs(small_cache)
        teacher = SENet(t_cfg)
        before = _hash(teacher)
        res = train_student(teacher, s_cfg, small_cache, TrainConfig(epochs=1, max_frames=24), run_dir=tmp_path)
        assert _hash(teacher) == before
        assert [r["epoch"] for r in res.log] == [0, 1]
        assert {"train_mse_kd", "train_spkd", "train_se", "valid_se"} <= set(res.log[1])
        assert (tmp_path / "checkpoints" / "best.npz").exists()

    def test_mismatched_student_rejected_before_training(self, small_cache):
        t_cfg, _ = self._cfgs(small_cache)
        bad = t_cfg.replace(modalities=("lip",), feature_channels=(8, 8, 8, 16, 16, 16, 16))
        with pytest.raises(ConfigError):
            train_student(SENet(t_cfg), bad, small_cache, TrainConfig(epochs=1, max_frames=24))
