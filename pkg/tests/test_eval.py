import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avse_tongue.dsp import Waveform
from avse_tongue.errors import ConfigError, DataError, DimensionError, LengthError, ModalityError
from avse_tongue.evaluation import (EvalReport, ProbeConfig, SegSnrConfig, enhance, evaluate_corpus,
                                    extract_frames, probe, probe_sources, probe_table, segsnr, stoi,
                                    stoi_min_samples)
from avse_tongue.senet import ModelConfig, SENet

FS = 16000


def _speechlike(n=FS * 2, seed=0):
    """Amplitude-modulated harmonic tone with pauses; enough envelope structure for STOI."""
    rng = np.random.default_rng(seed)
    t = np.arange(n) / FS
    f0 = 120 + 20 * np.sin(2 * np.pi * 0.7 * t)
    phase = 2 * np.pi * np.cumsum(f0) / FS
    x = sum(np.sin(k * phase) / k for k in range(1, 12))
    env = np.clip(np.sin(2 * np.pi * 3.0 * t + rng.uniform(0, 6)), 0, None) ** 2
    return x * env + 1e-3 * rng.standard_normal(n)


def _white_mix(x, snr, seed=1):
    n = np.random.default_rng(seed).standard_normal(x.size)
    n *= np.sqrt(np.mean(x ** 2) / np.mean(n ** 2) / 10 ** (snr / 10))
    return x + n


def _segsnr_oracle(ref, est, seg=480, lo=-10.0, hi=35.0):
    vals = []
    for s in range(ref.size // seg):
        r = ref[s * seg:(s + 1) * seg]
        e = est[s * seg:(s + 1) * seg]
        num = sum(v * v for v in r)
        den = sum(v * v for v in r - e)
        if num == 0:
            continue
        v = hi if den == 0 else 10 * np.log10(num / den)
        vals.append(min(hi, max(lo, v)))
    return float(np.mean(vals))


class TestSegSnr:
    def test_identical_is_clamp(self):
        x = _speechlike()
        assert segsnr(x, x) == 35.0

    def test_unity_ratio(self):
        rng = np.random.default_rng(0)
        ref = rng.standard_normal(4800)
        noise = rng.standard_normal(4800)
        # rescale the noise per 30 ms segment to exactly the reference power
        r, n = ref.reshape(10, 480), noise.reshape(10, 480)
        n = n * np.sqrt((r ** 2).sum(1, keepdims=True) / (n ** 2).sum(1, keepdims=True))
        assert segsnr(ref, ref + n.reshape(-1)) == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_oracle(self, seed):
        rng = np.random.default_rng(seed)
        ref = rng.standard_normal(3000)
        est = ref + rng.uniform(0.05, 3) * rng.standard_normal(3000)
        assert segsnr(ref, est) == pytest.approx(_segsnr_oracle(ref, est), abs=1e-6)

    def test_directional(self):
        # the reference energy is the numerator, so swapping arguments changes the score
        rng = np.random.default_rng(0)
        ref = rng.standard_normal(4800)
        est = 3.0 * ref
        assert segsnr(ref, est) == pytest.approx(10 * np.log10(1 / 4), abs=1e-9)
        assert segsnr(est, ref) == pytest.approx(10 * np.log10(9 / 4), abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), scale=st.floats(1e-4, 1e4))
    def test_clamped_range(self, seed, scale):
        rng = np.random.default_rng(seed)
        ref = rng.standard_normal(2000)
        v = segsnr(ref, ref + scale * rng.standard_normal(2000))
        assert -10.0 <= v <= 35.0

    def test_errors(self):
        with pytest.raises(DimensionError):
            segsnr(np.ones(1000), np.ones(999))
        with pytest.raises(LengthError):
            segsnr(np.ones(100), np.ones(100))
        with pytest.raises(ConfigError):
            SegSnrConfig(clamp_min=5, clamp_max=1)


class TestStoi:
    def test_self(self):
        x = _speechlike()
        assert stoi(x, x) >= 0.99

    def test_monotone_in_snr(self):
        x = _speechlike()
        scores = [stoi(x, _white_mix(x, snr)) for snr in (10, 0, -10)]
        assert scores[0] > scores[1] > scores[2]

    def test_unrelated_noise(self):
        x = _speechlike()
        assert stoi(x, np.random.default_rng(5).standard_normal(x.size)) <= 0.5

    @pytest.mark.parametrize("snr", [10, 0, -5])
    def test_matches_reference_implementation(self, snr):
        pystoi = pytest.importorskip("pystoi")
        x = _speechlike(seed=snr + 20)
        y = _white_mix(x, snr, seed=3)
        assert stoi(x, y) == pytest.approx(pystoi.stoi(x, y, FS, extended=False), abs=1e-4)

    def test_range_on_corpus(self, small_cache):
        uid = small_cache.manifest.ids("test")[0]
        x = small_cache.utterance(uid).clean.samples
        v = stoi(x, _white_mix(x, 0.0))
        assert 0.0 <= v <= 1.0

    def test_errors(self):
        n = stoi_min_samples(FS)
        with pytest.raises(LengthError):
            stoi(np.ones(n - 1), np.ones(n - 1))
        with pytest.raises(DimensionError):
            stoi(np.ones(n), np.ones(n + 1))


def _toy_model(cache, modalities="audio-lip-tongue"):
    return SENet(ModelConfig.toy(modalities, image_height=cache.gen_cfg.image_height,
                                 image_width=cache.gen_cfg.image_width)).eval()


class TestEvaluateCorpus:
    def test_identity_equals_noisy(self, small_cache):
        rep = evaluate_corpus(_toy_model(small_cache), small_cache, [2.5, -7.5], identity=True)
        assert len(rep.items) == 2 * len(small_cache.manifest.ids("test"))
        for it in rep.items:
            assert it["segsnr"] == it["noisy_segsnr"] and it["stoi"] == it["noisy_stoi"]

    def test_empty_snr_list(self, small_cache):
        rep = evaluate_corpus(_toy_model(small_cache), small_cache, [])
        assert rep.items == [] and rep.cells == {}

    def test_deterministic_and_written(self, small_cache, tmp_path):
        model = _toy_model(small_cache)
        ids = small_cache.manifest.ids("test")[:3]
        a = evaluate_corpus(model, small_cache, [0.0], seed=4, ids=ids)
        b = evaluate_corpus(model, small_cache, [0.0], seed=4, ids=ids)
        assert a.items == b.items
        txt, jsonl = a.write(tmp_path, "x")
        rows = [json.loads(line) for line in jsonl.read_text().splitlines()]
        assert len(rows) >= 1 and "segsnr" in txt.read_text().lower()

    def test_noise_split_partitions(self, small_cache):
        rep = evaluate_corpus(_toy_model(small_cache), small_cache, [0.0], identity=True)
        seen_noise = {it["condition"].endswith("/seen-noise") for it in rep.items}
        assert seen_noise == {True, False}
        unseen_spk = {it["id"] for it in rep.items if it["condition"].startswith("unseen-spk")}
        assert unseen_spk == {u for u in small_cache.manifest.ids("test")
                              if small_cache.records[u].unseen_speaker}

    def test_empty_report_mean_is_nan(self):
        assert np.isnan(EvalReport().mean())


class TestEnhance:
    def test_identity_round_trip(self):
        x = Waveform(_speechlike(8000), FS)
        y = enhance(None, x, identity=True)
        assert np.array_equal(y.samples, x.samples)

    def test_length_preserved(self, small_cache):
        uid = small_cache.manifest.ids("test")[0]
        utt = small_cache.utterance(uid)
        model = _toy_model(small_cache)
        y = enhance(model, utt.clean, utt.lip.frames, utt.tongue.frames, small_cache.gen_cfg.stft)
        assert len(y) == len(utt.clean) and np.isfinite(y.samples).all()

    def test_missing_stream(self, small_cache):
        utt = small_cache.utterance(small_cache.manifest.ids("test")[0])
        with pytest.raises(ModalityError):
            enhance(_toy_model(small_cache), utt.clean, utt.lip.frames, None, small_cache.gen_cfg.stft)


class TestProbe:
    def test_shuffled_labels_near_chance(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1000, 8))
        y = rng.integers(0, 4, 1000)
        r = probe(x, y, ProbeConfig(epochs=100), seed=0)
        assert abs(r.accuracy - r.chance) <= 3 * r.sigma + 0.02
        assert r.n_classes == 4

    def test_separable(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, 400)
        x = rng.standard_normal((400, 5)) + 4.0 * y[:, None]
        assert probe(x, y, ProbeConfig(epochs=100)).accuracy >= 0.95

    def test_group_split_keeps_groups_together(self):
        rng = np.random.default_rng(2)
        y = np.tile([0, 1], 300)
        groups = np.repeat(np.arange(30), 20)
        x = rng.standard_normal((600, 3)) + 3.0 * y[:, None]
        r = probe(x, y, ProbeConfig(epochs=50), groups=groups)
        assert r.n_test % 20 == 0

    def test_too_few_samples(self):
        with pytest.raises(DataError):
            probe(np.zeros((30, 2)), np.array([0] * 25 + [1] * 5))
        with pytest.raises(DataError):
            probe(np.zeros((30, 2)), np.zeros(30))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ProbeConfig(source="lip-images")

    def test_sources(self, small_cache):
        ids = small_cache.manifest.ids("train")
        with pytest.raises(ConfigError):
            extract_frames("real-tongue-features", small_cache, ids)
        with pytest.raises(ModalityError):
            extract_frames("memory-recalled-features", small_cache, ids, _toy_model(small_cache))
        x, phon, spk, grp = extract_frames("raw-tongue-images", small_cache, ids)
        assert len(x) == len(phon) == len(spk) == len(grp)
        res = probe_sources(small_cache, None, ids, sources=("raw-tongue-images",), cfg=ProbeConfig(epochs=20))
        assert "raw-tongue-images" in probe_table(res)
