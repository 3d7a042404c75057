import hashlib
import json

import numpy as np
import pytest
import yaml

from avse_tongue.cli import main
from avse_tongue.config import RunConfig
from avse_tongue.dsp import Waveform, read_wav, write_wav
from avse_tongue.errors import ConfigError
from avse_tongue.senet import load_model
from avse_tongue.synthdata import CorpusManifest

GEN = ["generator.n_train=16", "generator.n_valid=4", "generator.n_test=8", "generator.noise_seconds=3.0",
       "generator.babble_talkers=3", "generator.duration_s=[1.2,1.6]"]


@pytest.fixture(scope="module")
def corpus_dir(small_corpus):
    return str(small_corpus.path.parent)


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return tmp_path_factory.mktemp("runs")


def _sets(runs, *extra):
    out = []
    for item in (f"paths.runs={runs}", "optimizer.max_frames=24", "optimizer.metric_subset=0", *extra):
        out += ["--set", item]
    return out


def _bank_digest(path):
    z = np.load(path, allow_pickle=False)
    keys = sorted(k for k in z.files if "memory." in k)
    assert keys
    return hashlib.sha256(b"".join(z[k].tobytes() for k in keys)).hexdigest()


@pytest.fixture(scope="module")
def teacher_ckpt(corpus_dir, runs):
    assert main(["train", "--corpus", corpus_dir, "--name", "teacher", *_sets(runs, "optimizer.epochs=1")]) == 0
    return runs / "teacher" / "checkpoints" / "best.npz"


@pytest.fixture(scope="module")
def memory_ckpt(corpus_dir, runs, teacher_ckpt):
    assert main(["train-memory", "--pretrained", str(teacher_ckpt), "--slots", "16", "--corpus", corpus_dir,
                 "--name", "mem", *_sets(runs, "optimizer.epochs=1")]) == 0
    return runs / "mem" / "checkpoints" / "best.npz"


class TestGenData:
    def test_writes_and_repeats(self, tmp_path, capsys):
        sets = sum((["--set", s] for s in GEN), [])
        assert main(["gen-data", "--out", str(tmp_path / "a"), *sets]) == 0
        assert main(["gen-data", "--out", str(tmp_path / "b"), *sets]) == 0
        a = CorpusManifest.load(tmp_path / "a")
        b = CorpusManifest.load(tmp_path / "b")
        assert a.digest() == b.digest()
        assert len(a.ids("train")) == 16
        assert "16 train" in capsys.readouterr().out

    def test_bad_out_dir(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        sets = sum((["--set", s] for s in GEN), [])
        code = main(["gen-data", "--out", str(blocker / "sub"), *sets])
        assert code != 0
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_artifact_layout(self, teacher_ckpt, runs):
        d = runs / "teacher"
        assert teacher_ckpt.is_file() and (d / "reports").is_dir()
        cfg = yaml.safe_load((d / "config.yaml").read_text())
        assert cfg["seed"] == 0 and cfg["optimizer"]["lr"] == 1e-3
        _, meta = load_model(teacher_ckpt)
        assert meta["command"] == "train" and meta["run_config"]["seed"] == 0
        epochs = [json.loads(x)["epoch"] for x in (d / "log.jsonl").read_text().splitlines()]
        assert epochs == [0, 1]

    def test_zero_epochs(self, corpus_dir, runs):
        assert main(["train", "--corpus", corpus_dir, "--name", "init", "--modalities", "audio",
                     *_sets(runs, "optimizer.epochs=0")]) == 0
        model, meta = load_model(runs / "init" / "checkpoints" / "best.npz")
        assert meta["epoch"] == 0 and model.cfg.modalities == ()

    def test_resume(self, corpus_dir, runs, teacher_ckpt):
        assert main(["train", "--corpus", corpus_dir, "--name", "resumed", "--resume", str(teacher_ckpt),
                     *_sets(runs, "optimizer.epochs=1")]) == 0
        epochs = [json.loads(x)["epoch"] for x in (runs / "resumed" / "log.jsonl").read_text().splitlines()]
        assert epochs == [1, 2]

    def test_image_mismatch_fails_fast(self, corpus_dir, runs, capsys):
        code = main(["train", "--corpus", corpus_dir, "--name", "bad",
                     *_sets(runs, "generator.image_height=32")])
        assert code == ConfigError.exit_code
        assert "images" in capsys.readouterr().err


def test_distill(corpus_dir, runs, teacher_ckpt):
    assert main(["distill", "--teacher", str(teacher_ckpt), "--corpus", corpus_dir, "--name", "student",
                 *_sets(runs, "optimizer.epochs=1")]) == 0
    model, meta = load_model(runs / "student" / "checkpoints" / "best.npz")
    assert model.cfg.modalities == ("lip",) and meta["command"] == "distill"
    rec = json.loads((runs / "student" / "log.jsonl").read_text().splitlines()[-1])
    assert "train_spkd" in rec and "train_mse_kd" in rec


class TestTrainMemory:
    def test_missing_pretrained(self, corpus_dir, runs, capsys):
        code = main(["train-memory", "--pretrained", str(runs / "nope.npz"), "--corpus", corpus_dir,
                     *_sets(runs)])
        assert code == 5
        assert "does not exist" in capsys.readouterr().err

    def test_trains(self, memory_ckpt):
        model, meta = load_model(memory_ckpt)
        assert model.cfg.memory_slots == 16 and meta["memory_slots"] == 16
        rec = json.loads((memory_ckpt.parent.parent / "log.jsonl").read_text().splitlines()[0])
        assert rec["valid_save"] > 0 and rec["valid_align"] > 0

    def test_sweep(self, corpus_dir, runs, teacher_ckpt):
        assert main(["train-memory", "--pretrained", str(teacher_ckpt), "--sweep", "8", "16", "--corpus",
                     corpus_dir, "--name", "sweep", *_sets(runs, "optimizer.epochs=0")]) == 0
        for n in (8, 16):
            assert (runs / "sweep" / f"slots-{n}" / "checkpoints" / "best.npz").is_file()
        rows = [json.loads(x) for x in (runs / "sweep" / "reports" / "slot_sweep.jsonl").read_text().splitlines()]
        assert [r["slots"] for r in rows] == [8, 16]


class TestFinetune:
    def test_frozen_bank_identical(self, corpus_dir, runs, memory_ckpt):
        assert main(["finetune", "--ckpt", str(memory_ckpt), "--target-corpus", corpus_dir, "--freeze-memory",
                     "--lr", "5e-4", "--name", "ft-frozen", *_sets(runs, "optimizer.epochs=1")]) == 0
        out = runs / "ft-frozen" / "checkpoints" / "best.npz"
        assert _bank_digest(out) == _bank_digest(memory_ckpt)
        _, meta = load_model(out)
        assert meta["freeze_memory"] is True and meta["lr"] == 5e-4

    def test_unfrozen_bank_moves(self, corpus_dir, runs, memory_ckpt):
        assert main(["finetune", "--ckpt", str(memory_ckpt), "--target-corpus", corpus_dir,
                     "--name", "ft-free", *_sets(runs, "optimizer.epochs=1")]) == 0
        out = runs / "ft-free" / "checkpoints" / "best.npz"
        log = [json.loads(x) for x in (runs / "ft-free" / "log.jsonl").read_text().splitlines()]
        if load_model(out)[1]["epoch"] > 0:
            assert _bank_digest(out) != _bank_digest(memory_ckpt)
        assert log[-1]["epoch"] == 1

    def test_freeze_needs_memory(self, corpus_dir, runs, teacher_ckpt):
        assert main(["finetune", "--ckpt", str(teacher_ckpt), "--target-corpus", corpus_dir, "--freeze-memory",
                     *_sets(runs)]) == ConfigError.exit_code


def test_evaluate(corpus_dir, runs, teacher_ckpt, tmp_path, capsys):
    assert main(["evaluate", "--ckpt", str(teacher_ckpt), "--corpus", corpus_dir, "--snrs", "0", "--out",
                 str(tmp_path), *_sets(runs)]) == 0
    rows = [json.loads(x) for x in (tmp_path / "eval.jsonl").read_text().splitlines()]
    assert {r["snr_db"] for r in rows} == {0.0}
    assert "SegSNR" in capsys.readouterr().out


class TestEnhance:
    @pytest.fixture()
    def inputs(self, small_cache, tmp_path):
        uid = small_cache.manifest.ids("test")[0]
        utt = small_cache.utterance(uid)
        noisy = tmp_path / "noisy.wav"
        write_wav(noisy, Waveform(0.5 * utt.clean.samples, utt.clean.sample_rate))
        np.save(tmp_path / "lip.npy", utt.lip.frames)
        np.save(tmp_path / "tongue.npy", utt.tongue.frames)
        return tmp_path, noisy

    def test_identity(self, inputs, teacher_ckpt):
        d, noisy = inputs
        assert main(["enhance", "--ckpt", str(teacher_ckpt), "--noisy", str(noisy), "--identity-mask",
                     "--out", str(d / "out.wav")]) == 0
        assert np.array_equal(read_wav(d / "out.wav").samples, read_wav(noisy).samples)

    def test_length(self, inputs, teacher_ckpt):
        d, noisy = inputs
        assert main(["enhance", "--ckpt", str(teacher_ckpt), "--noisy", str(noisy), "--lip", str(d / "lip.npy"),
                     "--tongue", str(d / "tongue.npy"), "--out", str(d / "out.wav")]) == 0
        assert len(read_wav(d / "out.wav")) == len(read_wav(noisy))

    def test_memory_model_needs_no_tongue(self, inputs, memory_ckpt):
        d, noisy = inputs
        assert main(["enhance", "--ckpt", str(memory_ckpt), "--noisy", str(noisy), "--lip", str(d / "lip.npy"),
                     "--out", str(d / "out.wav")]) == 0

    def test_missing_lip(self, inputs, teacher_ckpt, capsys):
        d, noisy = inputs
        code = main(["enhance", "--ckpt", str(teacher_ckpt), "--noisy", str(noisy), "--tongue",
                     str(d / "tongue.npy"), "--out", str(d / "out.wav")])
        assert code == 7
        assert "lip" in capsys.readouterr().err


def test_probe(corpus_dir, runs, memory_ckpt, tmp_path, capsys):
    assert main(["probe", "--ckpt", str(memory_ckpt), "--corpus", corpus_dir, "--out", str(tmp_path),
                 *_sets(runs)]) == 0
    rows = [json.loads(x) for x in (tmp_path / "probe_pseudo-phoneme.jsonl").read_text().splitlines()]
    assert [r["source"] for r in rows] == ["raw-tongue-images", "real-tongue-features", "memory-recalled-features"]
    assert "accuracy" in capsys.readouterr().out


class TestConfig:
    def test_overrides_and_env_seed(self, monkeypatch):
        monkeypatch.setenv("AVSE_SEED", "7")
        cfg = RunConfig.load(None, ["optimizer.epochs=3", "loss.delta1=0.5"])
        assert cfg.seed == 7 and cfg.train_config().epochs == 3 and cfg.kd_config().delta1 == 0.5
        assert cfg.train_config().seed == 7

    def test_round_trip(self, tmp_path):
        cfg = RunConfig.load(None, ["name=x", "optimizer.batch_size=4"])
        cfg.dump(tmp_path / "c.yaml")
        again = RunConfig.load(tmp_path / "c.yaml")
        assert again.train_config() == cfg.train_config()
        assert again.generator_config() == cfg.generator_config()

    def test_rejects_bad_input(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.load(None, ["bogus=1"])
        with pytest.raises(ConfigError):
            RunConfig.load(None, ["optimizer.momentum=0.9"])
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "missing.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("a: [1,\n")
        with pytest.raises(ConfigError):
            RunConfig.load(bad)
        with pytest.raises(ConfigError):
            RunConfig.load(None, ["noequals"])

    def test_cli_config_error_exit_code(self, capsys):
        assert main(["evaluate", "--ckpt", "x.npz", "--set", "preset=huge"]) == ConfigError.exit_code
        assert "preset" in capsys.readouterr().err
