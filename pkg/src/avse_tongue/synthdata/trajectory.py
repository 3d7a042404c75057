"""Latent articulatory trajectories driving every rendered stream.

Each pseudo-phoneme fixes an aperture target, a tongue target and an easing
rate. Labels come in pairs that share an aperture target but differ in tongue
target and easing rate, so a single lip frame leaves the tongue ambiguous
while the lip's temporal dynamics carry part of the missing information.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .config import GeneratorConfig

REST_APERTURE = 0.1
TONGUE_APERTURE_COUPLING = 0.3


@dataclass
class PhonemeTargets:
    aperture: np.ndarray
    tongue: np.ndarray
    rate: np.ndarray


def phoneme_targets(n_phonemes: int) -> PhonemeTargets:
    if n_phonemes < 2:
        raise ConfigError(f"need at least 2 pseudo-phonemes, got {n_phonemes}")
    p = np.arange(n_phonemes)
    pair = p // 2
    n_pairs = (n_phonemes + 1) // 2
    aperture = 0.15 + 0.75 * pair / max(n_pairs - 1, 1)
    low_first = (pair % 2 == 0)
    odd = (p % 2 == 1)
    tongue = np.where(odd ^ low_first, 0.15, 0.85)
    rate = np.where(odd, 0.45, 0.15)
    return PhonemeTargets(aperture, tongue, rate)


@dataclass
class LatentTrajectory:
    aperture: np.ndarray
    tongue_state: np.ndarray
    labels: np.ndarray
    frame_rate: float

    def __post_init__(self):
        n = len(self.labels)
        if len(self.aperture) != n or len(self.tongue_state) != n:
            raise ValueError("trajectory sequences differ in length")

    def __len__(self):
        return len(self.labels)

    def segments(self) -> list[tuple[int, int, int]]:
        """(start, stop, label) runs of constant label."""
        change = np.flatnonzero(np.diff(self.labels)) + 1
        bounds = np.concatenate([[0], change, [len(self.labels)]])
        return [(int(a), int(b), int(self.labels[a])) for a, b in zip(bounds[:-1], bounds[1:])]


def tongue_from(labels: np.ndarray, aperture: np.ndarray, targets: PhonemeTargets) -> np.ndarray:
    a_t = targets.aperture[labels]
    return np.clip(targets.tongue[labels] + TONGUE_APERTURE_COUPLING * (aperture - a_t), 0.0, 1.0)


def n_frames_for(duration_s: float, frame_rate: float) -> int:
    return int(np.floor(duration_s * frame_rate + 1e-9))


def sample_trajectory(cfg: GeneratorConfig, rng: np.random.Generator,
                      force_label: int | None = None) -> LatentTrajectory:
    """Draw a piecewise-smooth trajectory.

    ``force_label`` pins every segment to one pseudo-phoneme, which yields a
    constant-target trajectory.
    """
    targets = phoneme_targets(cfg.n_phonemes)
    lo, hi = cfg.duration_s
    duration = lo if hi == lo else float(rng.uniform(lo, hi))
    n = n_frames_for(duration, cfg.frame_rate)
    if n < 1:
        raise ConfigError(f"duration {duration}s gives no frames")

    labels = np.empty(n, dtype=np.int64)
    pos = 0
    prev = -1
    seg_lo, seg_hi = cfg.segment_frames
    while pos < n:
        length = int(rng.integers(seg_lo, seg_hi + 1))
        if force_label is not None:
            lab = force_label
        elif prev < 0:
            lab = int(rng.integers(cfg.n_phonemes))
        else:
            # never repeat the previous label, so label changes mark segment boundaries
            lab = int(rng.integers(cfg.n_phonemes - 1))
            lab += lab >= prev
        labels[pos:pos + length] = lab
        prev = lab
        pos += length

    aperture = np.empty(n)
    a = REST_APERTURE
    for t in range(n):
        lab = labels[t]
        a = a + targets.rate[lab] * (targets.aperture[lab] - a)
        aperture[t] = a
    tongue = tongue_from(labels, aperture, targets)
    return LatentTrajectory(aperture, tongue, labels, cfg.frame_rate)
