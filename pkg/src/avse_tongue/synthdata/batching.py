"""Turning corpus utterances into noisy/clean training batches."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..dsp import StftConfig, Waveform, mix_at_snr, stft
from ..errors import DataError
from .corpus import CorpusManifest, Utterance, load_noise, load_utterance
from .render import ImageSequence

TRAIN_SNRS = (0.0, -5.0, -10.0)
TEST_SNRS = (2.5, -2.5, -7.5)


def append_stats_channels(seq: ImageSequence | np.ndarray) -> np.ndarray:
    """Stack raw frames with the per-utterance pixel-wise mean and (population) std images.

    Returns a 3 x S x H x W array.
    """
    frames = seq.frames if isinstance(seq, ImageSequence) else np.asarray(seq, dtype=np.float32)
    # shift by the first frame so constant pixels give an exact zero std
    ref = frames[:1].astype(np.float64)
    dev = frames - ref
    mean = ref + dev.mean(axis=0, keepdims=True)
    std = dev.std(axis=0, keepdims=True)
    s = frames.shape[0]
    return np.stack([frames, np.repeat(mean, s, axis=0), np.repeat(std, s, axis=0)]).astype(np.float32)


class CorpusCache:
    """Read-only in-memory view of a corpus; loads each file once."""

    def __init__(self, manifest: CorpusManifest):
        self.manifest = manifest
        self.records = manifest.by_id()
        self.gen_cfg = manifest.generator_config()
        self._utts: dict[str, Utterance] = {}
        self._stats: dict[tuple[str, str], np.ndarray] = {}
        self._noises: dict[str, Waveform] = {}

    def utterance(self, uid: str) -> Utterance:
        if uid not in self._utts:
            if uid not in self.records:
                raise DataError(f"utterance {uid!r} is not in the manifest")
            self._utts[uid] = load_utterance(self.manifest, self.records[uid])
        return self._utts[uid]

    def images3(self, uid: str, modality: str) -> np.ndarray:
        key = (uid, modality)
        if key not in self._stats:
            utt = self.utterance(uid)
            self._stats[key] = append_stats_channels(utt.lip if modality == "lip" else utt.tongue)
        return self._stats[key]

    def noise(self, name: str) -> Waveform:
        if name not in self._noises:
            self._noises[name] = load_noise(self.manifest, name)
        return self._noises[name]


@dataclass
class Batch:
    noisy_spec: np.ndarray  # b x 2 x F x S
    clean_spec: np.ndarray  # b x 2 x F x S
    lip3: np.ndarray  # b x 3 x S x H x W
    tongue3: np.ndarray  # b x 3 x S x H x W
    labels: np.ndarray  # b x S pseudo-phoneme ids
    speaker_ids: np.ndarray
    snr_db: np.ndarray
    ids: list[str]
    offsets: np.ndarray
    noise_names: list[str]

    def __len__(self):
        return len(self.ids)

    @property
    def n_frames(self) -> int:
        return self.noisy_spec.shape[-1]


@dataclass
class MixedItem:
    noisy: Waveform
    clean: Waveform
    noise_name: str
    snr_db: float


def choice_sampler(values: Sequence[float]) -> Callable[[np.random.Generator], float]:
    values = tuple(float(v) for v in values)
    return lambda rng: values[int(rng.integers(len(values)))]


def mix_item(cache: CorpusCache, uid: str, noise_name: str, snr: float, seed: int) -> MixedItem:
    utt = cache.utterance(uid)
    noisy = mix_at_snr(utt.clean, cache.noise(noise_name), snr, seed)
    return MixedItem(noisy, utt.clean, noise_name, snr)


def _spec2(wave: Waveform, cfg: StftConfig) -> np.ndarray:
    return stft(wave, cfg).stacked().astype(np.float32)


def load_batch(source: CorpusManifest | CorpusCache, ids: Sequence[str], stft_cfg: StftConfig,
               snr_sampler: Callable[[np.random.Generator], float] | Sequence[float],
               rng: np.random.Generator, noise_names: Sequence[str] | None = None,
               max_frames: int | None = None) -> Batch:
    """Mix, transform and crop a set of utterances into one batch.

    All items are cropped (random per-item offset) to the shortest item's frame
    count, optionally capped at ``max_frames``.
    """
    if not ids:
        raise DataError("load_batch needs at least one utterance id")
    cache = source if isinstance(source, CorpusCache) else CorpusCache(source)
    if not callable(snr_sampler):
        snr_sampler = choice_sampler(snr_sampler)
    if noise_names is None:
        noise_names = cache.manifest.noise_names("seen")
    noise_names = list(noise_names)

    noisy, clean, lips, tongues, labels, snrs, chosen = [], [], [], [], [], [], []
    for uid in ids:
        noise = noise_names[int(rng.integers(len(noise_names)))]
        snr = float(snr_sampler(rng))
        item = mix_item(cache, uid, noise, snr, int(rng.integers(2 ** 31)))
        noisy.append(_spec2(item.noisy, stft_cfg))
        clean.append(_spec2(item.clean, stft_cfg))
        lips.append(cache.images3(uid, "lip"))
        tongues.append(cache.images3(uid, "tongue"))
        labels.append(cache.utterance(uid).trajectory.labels)
        snrs.append(snr)
        chosen.append(noise)

    s_min = min(x.shape[-1] for x in noisy)
    if max_frames is not None:
        s_min = min(s_min, max_frames)
    offsets = np.array([int(rng.integers(x.shape[-1] - s_min + 1)) for x in noisy])
    crop = [slice(o, o + s_min) for o in offsets]
    return Batch(
        noisy_spec=np.stack([x[..., c] for x, c in zip(noisy, crop)]),
        clean_spec=np.stack([x[..., c] for x, c in zip(clean, crop)]),
        lip3=np.stack([x[:, c] for x, c in zip(lips, crop)]),
        tongue3=np.stack([x[:, c] for x, c in zip(tongues, crop)]),
        labels=np.stack([x[c] for x, c in zip(labels, crop)]),
        speaker_ids=np.array([cache.records[u].speaker_id for u in ids]),
        snr_db=np.array(snrs),
        ids=list(ids),
        offsets=offsets,
        noise_names=chosen,
    )
