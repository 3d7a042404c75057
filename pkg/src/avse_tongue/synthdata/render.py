"""Rendering latent trajectories into audio, lip frames and tongue frames."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, lfiltic

from ..dsp import Waveform
from ..errors import ConfigError
from .config import GeneratorConfig
from .trajectory import LatentTrajectory

PEAK_LEVEL = 0.9

# resonance centre = base + per-aperture slope * aperture + per-tongue slope * tongue (+ speaker offset)
R1_BASE, R1_APERTURE, R1_TONGUE, R1_BANDWIDTH = 250.0, 650.0, 100.0, 90.0
R2_BASE, R2_APERTURE, R2_TONGUE, R2_BANDWIDTH = 800.0, 200.0, 1500.0, 140.0
R2_GAIN = 0.6


@dataclass(frozen=True)
class SpeakerParams:
    speaker_id: int
    f0: float
    r1_offset: float
    r2_offset: float
    aspiration: float
    lip_width: float
    tongue_offset: float

    @classmethod
    def draw(cls, speaker_id: int, corpus_seed: int) -> "SpeakerParams":
        rng = np.random.default_rng([corpus_seed, 7919, speaker_id])
        return cls(
            speaker_id=speaker_id,
            f0=float(rng.uniform(90.0, 240.0)),
            r1_offset=float(rng.uniform(-80.0, 80.0)),
            r2_offset=float(rng.uniform(-150.0, 150.0)),
            aspiration=float(rng.uniform(0.02, 0.08)),
            lip_width=float(rng.uniform(0.8, 1.1)),
            tongue_offset=float(rng.uniform(-1.0, 1.0)),
        )


def resonance_centres(aperture, tongue, spk: SpeakerParams):
    f1 = R1_BASE + R1_APERTURE * aperture + R1_TONGUE * tongue + spk.r1_offset
    f2 = R2_BASE + R2_APERTURE * aperture + R2_TONGUE * tongue + spk.r2_offset
    return f1, f2


def frame_tracks_to_samples(track: np.ndarray, n_samples: int, hop: int, window_length: int) -> np.ndarray:
    centres = np.arange(len(track)) * hop + window_length / 2.0
    return np.interp(np.arange(n_samples), centres, track)


def _resonator(x: np.ndarray, centres: np.ndarray, bandwidth: float, sample_rate: int, block: int) -> np.ndarray:
    """Two-pole resonator whose centre frequency is updated every ``block`` samples."""
    y = np.zeros_like(x)
    r = np.exp(-np.pi * bandwidth / sample_rate)
    prev = np.zeros(2)
    for start in range(0, x.size, block):
        stop = min(start + block, x.size)
        theta = 2.0 * np.pi * centres[start] / sample_rate
        a = [1.0, -2.0 * r * np.cos(theta), r * r]
        gain = (1.0 - r) * np.sqrt(1.0 - 2.0 * r * np.cos(2.0 * theta) + r * r)
        zi = lfiltic([gain], a, prev[::-1])
        seg, _ = lfilter([gain], a, x[start:stop], zi=zi)
        y[start:stop] = seg
        tail = y[max(0, stop - 2):stop]
        prev = np.concatenate([np.zeros(2 - tail.size), tail])
    return y


def render_audio(traj: LatentTrajectory, spk: SpeakerParams, cfg: GeneratorConfig,
                 rng: np.random.Generator | None = None) -> Waveform:
    """Harmonic source at the speaker's F0, gated by lip aperture and shaped by two resonators.

    The result spans exactly ``len(traj)`` STFT frames under ``cfg.stft``.
    """
    stft_cfg = cfg.stft
    sr = cfg.sample_rate
    n = stft_cfg.num_samples(len(traj))
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 104729, spk.speaker_id, len(traj)])
    aperture = frame_tracks_to_samples(traj.aperture, n, stft_cfg.hop, stft_cfg.window_length)
    tongue = frame_tracks_to_samples(traj.tongue_state, n, stft_cfg.hop, stft_cfg.window_length)

    t = np.arange(n) / sr
    f0 = spk.f0 * (1.0 + 0.04 * np.sin(2.0 * np.pi * 0.7 * t + rng.uniform(0, 2 * np.pi)))
    phase = 2.0 * np.pi * np.cumsum(f0) / sr
    n_harm = int(0.45 * sr // (spk.f0 * 1.04))
    k = np.arange(1, n_harm + 1)[:, None]
    harmonics = np.sum(np.sin(k * phase[None, :]) / k, axis=0)
    harmonics /= np.sqrt(np.mean(harmonics ** 2)) + 1e-12
    source = (1.0 - spk.aspiration) * harmonics + spk.aspiration * rng.standard_normal(n)
    source *= aperture

    f1, f2 = resonance_centres(aperture, tongue, spk)
    y = (_resonator(source, f1, R1_BANDWIDTH, sr, stft_cfg.hop)
         + R2_GAIN * _resonator(source, f2, R2_BANDWIDTH, sr, stft_cfg.hop))
    peak = np.max(np.abs(y))
    if peak > 1e-8:
        y = y * (PEAK_LEVEL / peak)
    return Waveform(y, sr)


@dataclass
class ImageSequence:
    frames: np.ndarray
    modality: str

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValueError(f"image sequence must be S x H x W with S >= 1, got {self.frames.shape}")
        if self.modality not in ("lip", "tongue"):
            raise ValueError(f"unknown modality {self.modality!r}")

    def __len__(self):
        return self.frames.shape[0]


def _check_size(cfg: GeneratorConfig):
    if cfg.image_height < 8 or cfg.image_width < 8:
        raise ConfigError(f"images must be at least 8x8, got {cfg.image_height}x{cfg.image_width}")


def lip_frame(aperture: float, height: int, width: int, lip_width: float = 1.0) -> np.ndarray:
    cy, cx = height // 2, width // 2
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    semi_x = 0.35 * width * lip_width
    semi_y = max(0.4 * height * aperture, 0.5)
    r2 = ((xx - cx) / semi_x) ** 2 + ((yy - cy) / semi_y) ** 2
    return np.clip(1.0 - r2, 0.0, 1.0)


def render_lip(traj: LatentTrajectory, cfg: GeneratorConfig, spk: SpeakerParams | None = None) -> ImageSequence:
    _check_size(cfg)
    lw = spk.lip_width if spk is not None else 1.0
    frames = np.stack([lip_frame(a, cfg.image_height, cfg.image_width, lw) for a in traj.aperture])
    return ImageSequence(frames, "lip")


def tongue_base_row(height: int) -> float:
    return 0.8 * (height - 1)


def tongue_frame(tongue_state: float, aperture: float, height: int, width: int,
                 deflection: float, offset: float = 0.0) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    u = (xx - (width - 1) / 2.0) / ((width - 1) / 2.0)
    bow = 0.15 * height * aperture
    surface = tongue_base_row(height) + offset - deflection * tongue_state - bow * (1.0 - u ** 2)
    return np.exp(-0.5 * ((yy - surface) / 0.8) ** 2)


def render_tongue(traj: LatentTrajectory, cfg: GeneratorConfig, spk: SpeakerParams | None = None,
                  rng: np.random.Generator | None = None) -> ImageSequence:
    """Bright tongue-surface arc with multiplicative gamma speckle, as in ultrasound."""
    _check_size(cfg)
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 15485863, len(traj)])
    offset = spk.tongue_offset if spk is not None else 0.0
    frames = np.stack([
        tongue_frame(t, a, cfg.image_height, cfg.image_width, cfg.tongue_deflection, offset)
        for t, a in zip(traj.tongue_state, traj.aperture)
    ])
    speckle = rng.gamma(cfg.speckle_shape, 1.0 / cfg.speckle_shape, size=frames.shape)
    return ImageSequence(np.clip(frames * speckle, 0.0, 1.0), "tongue")
