"""On-disk corpus: generation, manifest, and per-utterance file formats.

Layout under the corpus root::

    manifest.jsonl                one JSON record per line (header, utterances, noises)
    utterances/<id>/audio.wav     16-bit PCM mono
    utterances/<id>/lip.img       raw image array (see write_image_array)
    utterances/<id>/tongue.img
    utterances/<id>/labels.txt    one "label aperture tongue_state" line per frame
    noise/<name>.wav              noise library

The image container is an 8-byte magic ``AVSEIMG1``, one byte dtype code
(0 = uint8 scaled by 1/255, 1 = float32), one byte ndim, ndim little-endian
uint32 dimensions, then the C-ordered little-endian payload.
"""
from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dsp import Waveform, read_wav, write_wav
from ..errors import DataError, LoadError
from .config import GeneratorConfig
from .render import ImageSequence, SpeakerParams, render_audio, render_lip, render_tongue
from .trajectory import LatentTrajectory, sample_trajectory

IMAGE_MAGIC = b"AVSEIMG1"
_DTYPES = {0: np.dtype("<u1"), 1: np.dtype("<f4")}
SEEN_NOISES = ("white", "pink", "babble")
UNSEEN_NOISES = ("brown", "babble_unseen")


def write_image_array(path: str | Path, frames: np.ndarray, dtype_code: int = 1) -> None:
    frames = np.asarray(frames)
    if dtype_code == 0:
        payload = np.round(np.clip(frames, 0.0, 1.0) * 255.0).astype(_DTYPES[0])
    else:
        payload = frames.astype(_DTYPES[dtype_code])
    header = IMAGE_MAGIC + struct.pack("<BB", dtype_code, payload.ndim)
    header += struct.pack(f"<{payload.ndim}I", *payload.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(payload).tobytes())


def read_image_array(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != IMAGE_MAGIC:
        raise LoadError(f"{path}: not an image array file")
    code, ndim = struct.unpack("<BB", blob[8:10])
    if code not in _DTYPES:
        raise LoadError(f"{path}: unknown dtype code {code}")
    shape = struct.unpack(f"<{ndim}I", blob[10:10 + 4 * ndim])
    data = np.frombuffer(blob, dtype=_DTYPES[code], offset=10 + 4 * ndim)
    if data.size != int(np.prod(shape)):
        raise LoadError(f"{path}: payload holds {data.size} values, header promises {shape}")
    data = data.reshape(shape)
    if code == 0:
        return data.astype(np.float32) / 255.0
    return data.astype(np.float32)


@dataclass
class Utterance:
    clean: Waveform
    lip: ImageSequence
    tongue: ImageSequence
    trajectory: LatentTrajectory
    speaker_id: int
    utterance_id: str

    def __post_init__(self):
        if len(self.lip) != len(self.tongue):
            raise DataError(f"{self.utterance_id}: lip and tongue frame counts differ")


@dataclass
class UtteranceRecord:
    utterance_id: str
    speaker_id: int
    split: str
    unseen_speaker: bool
    duration: float
    n_frames: int
    files: dict

    def to_json(self) -> dict:
        return {"type": "utterance", "id": self.utterance_id, "speaker_id": self.speaker_id,
                "split": self.split, "unseen_speaker": self.unseen_speaker,
                "duration": round(self.duration, 6), "n_frames": self.n_frames, "files": self.files}


@dataclass
class CorpusManifest:
    root: Path
    seed: int
    config_hash: str
    config: dict
    utterances: list[UtteranceRecord]
    noises: dict[str, dict] = field(default_factory=dict)

    @property
    def path(self) -> Path:
        return self.root / "manifest.jsonl"

    def by_id(self) -> dict[str, UtteranceRecord]:
        return {u.utterance_id: u for u in self.utterances}

    def split(self, name: str) -> list[UtteranceRecord]:
        return [u for u in self.utterances if u.split == name]

    def ids(self, split: str) -> list[str]:
        return [u.utterance_id for u in self.split(split)]

    def speakers(self, split: str | None = None) -> set[int]:
        return {u.speaker_id for u in self.utterances if split is None or u.split == split}

    def noise_names(self, split: str) -> list[str]:
        return [n for n, rec in self.noises.items() if rec["split"] == split]

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig.from_dict(self.config)

    def digest(self) -> str:
        return hashlib.sha256(self.path.read_bytes()).hexdigest()

    def write(self) -> None:
        lines = [json.dumps({"type": "header", "seed": self.seed, "config_hash": self.config_hash,
                             "config": self.config}, sort_keys=True)]
        lines += [json.dumps(u.to_json(), sort_keys=True) for u in self.utterances]
        lines += [json.dumps({"type": "noise", "name": n, **rec}, sort_keys=True)
                  for n, rec in self.noises.items()]
        self.path.write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.jsonl"
        if not path.exists():
            raise LoadError(f"manifest not found: {path}")
        header = None
        utts, noises = [], {}
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "header":
                header = rec
            elif kind == "utterance":
                utts.append(UtteranceRecord(rec["id"], rec["speaker_id"], rec["split"],
                                            rec["unseen_speaker"], rec["duration"],
                                            rec["n_frames"], rec["files"]))
            elif kind == "noise":
                name = rec.pop("name")
                noises[name] = rec
        if header is None:
            raise LoadError(f"{path}: missing header record")
        return cls(path.parent, header["seed"], header["config_hash"], header["config"], utts, noises)


def _split_plan(cfg: GeneratorConfig) -> list[tuple[str, int, bool]]:
    """(split, speaker_id, unseen) per utterance index."""
    seen = list(range(cfg.n_seen_speakers))
    unseen = list(range(cfg.n_seen_speakers, cfg.n_speakers))
    everyone = seen + unseen
    plan = [("train", seen[i % len(seen)], False) for i in range(cfg.n_train)]
    plan += [("valid", everyone[i % len(everyone)], everyone[i % len(everyone)] in unseen)
             for i in range(cfg.n_valid)]
    for i in range(cfg.n_test):
        if unseen and i % 2 == 1:
            spk = unseen[(i // 2) % len(unseen)]
        else:
            spk = seen[(i // 2) % len(seen)]
        plan.append(("test", spk, spk in unseen))
    return plan


def synthesize_utterance(cfg: GeneratorConfig, index: int, speaker_id: int, utterance_id: str,
                         stream: int = 0) -> Utterance:
    """Render one utterance; the result depends only on (cfg, index, speaker_id, stream)."""
    rng = np.random.default_rng([cfg.seed, stream, index])
    spk = SpeakerParams.draw(speaker_id, cfg.seed)
    traj = sample_trajectory(cfg, rng)
    clean = render_audio(traj, spk, cfg, rng)
    lip = render_lip(traj, cfg, spk)
    tongue = render_tongue(traj, cfg, spk, rng)
    return Utterance(clean, lip, tongue, traj, speaker_id, utterance_id)


def _write_utterance(root: Path, utt: Utterance, dtype_code: int) -> dict:
    rel = Path("utterances") / utt.utterance_id
    d = root / rel
    d.mkdir(parents=True, exist_ok=True)
    write_wav(d / "audio.wav", utt.clean)
    write_image_array(d / "lip.img", utt.lip.frames, dtype_code)
    write_image_array(d / "tongue.img", utt.tongue.frames, dtype_code)
    tr = utt.trajectory
    rows = ["# label aperture tongue_state"]
    rows += [f"{int(l)} {a:.6f} {t:.6f}" for l, a, t in zip(tr.labels, tr.aperture, tr.tongue_state)]
    (d / "labels.txt").write_text("\n".join(rows) + "\n")
    return {k: str(rel / f) for k, f in
            (("audio", "audio.wav"), ("lip", "lip.img"), ("tongue", "tongue.img"), ("labels", "labels.txt"))}


def _generate_one(args):
    root, cfg_dict, index, split, spk, unseen, dtype_code = args
    cfg = GeneratorConfig.from_dict(cfg_dict)
    uid = f"{split}_s{spk:02d}_{index:05d}"
    utt = synthesize_utterance(cfg, index, spk, uid)
    files = _write_utterance(Path(root), utt, dtype_code)
    n = len(utt.lip)
    if cfg.stft.num_frames(len(utt.clean)) != n:
        raise DataError(f"{uid}: audio does not span {n} STFT frames")
    return UtteranceRecord(uid, spk, split, unseen, utt.clean.duration, n, files)


def white_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(n)


def colored_noise(n: int, rng: np.random.Generator, exponent: float) -> np.ndarray:
    """Noise with power spectrum proportional to 1/f**exponent (1 = pink, 2 = brown)."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n)
    f[0] = f[1]
    spec *= f ** (-exponent / 2.0)
    x = np.fft.irfft(spec, n)
    return x / np.std(x)


def babble_noise(cfg: GeneratorConfig, n: int, speakers: list[int], stream: int) -> np.ndarray:
    """Sum of independent synthetic talkers, each tiled to ``n`` samples."""
    out = np.zeros(n)
    for k in range(cfg.babble_talkers):
        spk = speakers[k % len(speakers)]
        pieces, total, j = [], 0, 0
        while total < n:
            utt = synthesize_utterance(cfg, 100000 * (k + 1) + j, spk, "babble", stream=stream)
            x = utt.clean.samples / (np.std(utt.clean.samples) + 1e-12)
            pieces.append(x)
            total += x.size
            j += 1
        out += np.concatenate(pieces)[:n]
    return out / np.std(out)


def build_noise_library(cfg: GeneratorConfig) -> dict[str, np.ndarray]:
    n = int(cfg.noise_seconds * cfg.sample_rate)
    rng = np.random.default_rng([cfg.seed, 2])
    seen = list(range(cfg.n_seen_speakers))
    unseen = list(range(cfg.n_seen_speakers, cfg.n_speakers)) or seen
    lib = {
        "white": white_noise(n, rng),
        "pink": colored_noise(n, rng, 1.0),
        "babble": babble_noise(cfg, n, seen, stream=3),
        "brown": colored_noise(n, rng, 2.0),
        "babble_unseen": babble_noise(cfg, n, unseen, stream=4),
    }
    return {k: 0.5 * v / np.max(np.abs(v)) for k, v in lib.items()}


def generate_corpus(cfg: GeneratorConfig, out_dir: str | Path, workers: int = 1,
                    image_dtype_code: int = 0) -> CorpusManifest:
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / "noise").mkdir(exist_ok=True)
    except OSError as exc:
        raise LoadError(f"cannot create corpus directory {root}: {exc}") from exc

    cfg_dict = cfg.to_dict()
    jobs = [(str(root), cfg_dict, i, split, spk, unseen, image_dtype_code)
            for i, (split, spk, unseen) in enumerate(_split_plan(cfg))]
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                records = list(pool.map(_generate_one, jobs, chunksize=8))
        else:
            records = [_generate_one(j) for j in jobs]
    except OSError as exc:
        raise LoadError(f"writing corpus under {root} failed: {exc}") from exc

    noises = {}
    for name, x in build_noise_library(cfg).items():
        rel = f"noise/{name}.wav"
        write_wav(root / rel, Waveform(x, cfg.sample_rate))
        noises[name] = {"split": "seen" if name in SEEN_NOISES else "unseen", "path": rel}

    manifest = CorpusManifest(root, cfg.seed, cfg.fingerprint(), cfg_dict, records, noises)
    manifest.write()
    return manifest


def load_utterance(manifest: CorpusManifest, record: UtteranceRecord) -> Utterance:
    root = manifest.root
    try:
        clean = read_wav(root / record.files["audio"])
        lip = ImageSequence(read_image_array(root / record.files["lip"]), "lip")
        tongue = ImageSequence(read_image_array(root / record.files["tongue"]), "tongue")
        rows = np.loadtxt(root / record.files["labels"], comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise LoadError(f"utterance {record.utterance_id}: {exc}") from exc
    traj = LatentTrajectory(rows[:, 1], rows[:, 2], rows[:, 0].astype(np.int64),
                            clean.sample_rate / manifest.generator_config().stft.hop)
    return Utterance(clean, lip, tongue, traj, record.speaker_id, record.utterance_id)


def load_noise(manifest: CorpusManifest, name: str) -> Waveform:
    try:
        return read_wav(manifest.root / manifest.noises[name]["path"])
    except (OSError, KeyError) as exc:
        raise LoadError(f"noise {name!r}: {exc}") from exc
