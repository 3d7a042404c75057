"""Signal-domain primitives: STFT analysis/synthesis, complex masking, SNR mixing, WAV I/O."""
from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from .errors import ConfigError, DegenerateInputError, DimensionError, LengthError

DENOMINATOR_FLOOR = 1e-8


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise LengthError("waveform must be a non-empty 1-D sequence")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters. Defaults: 512-sample Hann window, hop 196, 512-point FFT at 16 kHz."""

    window_length: int = 512
    hop: int = 196
    fft_size: int = 512
    window: str = "hann"
    sample_rate: int = 16000

    def __post_init__(self):
        if not 0 < self.hop < self.window_length <= self.fft_size:
            raise ConfigError(
                f"need 0 < hop < window_length <= fft_size, got "
                f"hop={self.hop} window_length={self.window_length} fft_size={self.fft_size}"
            )

    @property
    def freq_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    def window_array(self) -> np.ndarray:
        name = "boxcar" if self.window in ("rect", "rectangular", "boxcar") else self.window
        return get_window(name, self.window_length, fftbins=True)

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.window_length:
            return 0
        return (n_samples - self.window_length) // self.hop + 1

    def num_samples(self, n_frames: int) -> int:
        """Shortest signal length that yields exactly ``n_frames`` frames."""
        return (n_frames - 1) * self.hop + self.window_length

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ComplexSpectrogram:
    real: np.ndarray
    imag: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape or self.real.ndim != 2:
            raise DimensionError(
                f"real/imag parts must be equal 2-D arrays, got {self.real.shape} and {self.imag.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.real.shape

    @property
    def n_frames(self) -> int:
        return self.real.shape[1]

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    def stacked(self) -> np.ndarray:
        """2 x F x S array (real, imag)."""
        return np.stack([self.real, self.imag])

    @classmethod
    def from_complex(cls, z: np.ndarray, frame_rate: float) -> "ComplexSpectrogram":
        return cls(z.real, z.imag, frame_rate)


@dataclass
class ComplexMask:
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape:
            raise DimensionError("mask real/imag shapes differ")
        if np.any(np.abs(self.real) > 1.0) or np.any(np.abs(self.imag) > 1.0):
            raise ValueError("mask entries must lie within [-1, 1]")

    @classmethod
    def identity(cls, shape) -> "ComplexMask":
        return cls(np.ones(shape), np.zeros(shape))


def _frames(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n = cfg.num_frames(x.size)
    idx = np.arange(cfg.window_length)[None, :] + cfg.hop * np.arange(n)[:, None]
    return x[idx]


def stft(wave: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    x = wave.samples
    if x.size < cfg.window_length:
        raise LengthError(f"signal of {x.size} samples is shorter than one window ({cfg.window_length})")
    frames = _frames(x, cfg) * cfg.window_array()[None, :]
    z = np.fft.rfft(frames, n=cfg.fft_size, axis=1).T
    return ComplexSpectrogram.from_complex(z, wave.sample_rate / cfg.hop)


def synthesis_denominator(cfg: StftConfig, n_frames: int) -> np.ndarray:
    """Sum of squared, hop-shifted analysis windows over the covered span."""
    w2 = cfg.window_array() ** 2
    den = np.zeros(cfg.num_samples(n_frames))
    for s in range(n_frames):
        den[s * cfg.hop:s * cfg.hop + cfg.window_length] += w2
    return den


def interior_slice(cfg: StftConfig, n_samples: int) -> slice:
    """Samples at least half a window away from either end of the covered span."""
    half = cfg.window_length // 2
    return slice(half, max(half, n_samples - half))


def istft(spec: ComplexSpectrogram, cfg: StftConfig = StftConfig(), target_length: int | None = None) -> Waveform:
    n_frames = spec.n_frames
    if spec.shape[0] != cfg.freq_bins:
        raise DimensionError(f"spectrogram has {spec.shape[0]} bins, config expects {cfg.freq_bins}")
    covered = cfg.num_samples(n_frames)
    win = cfg.window_array()
    den = synthesis_denominator(cfg, n_frames)
    inner = den[interior_slice(cfg, covered)]
    if inner.size and inner.min() < DENOMINATOR_FLOOR:
        raise ConfigError(
            f"overlap-add denominator falls to {inner.min():.3g} inside the signal; "
            f"window/hop pair {cfg.window_length}/{cfg.hop} cannot be inverted"
        )
    frames = np.fft.irfft(spec.to_complex().T, n=cfg.fft_size, axis=1)[:, :cfg.window_length]
    out = np.zeros(covered)
    for s in range(n_frames):
        out[s * cfg.hop:s * cfg.hop + cfg.window_length] += frames[s] * win
    safe = den > DENOMINATOR_FLOOR
    out[safe] /= den[safe]
    out[~safe] = 0.0
    if target_length is None:
        target_length = covered
    if target_length <= covered:
        out = out[:target_length]
    else:
        out = np.pad(out, (0, target_length - covered))
    sample_rate = int(round(spec.frame_rate * cfg.hop))
    return Waveform(out, sample_rate)


def apply_complex_mask(spec: ComplexSpectrogram, mask: ComplexMask) -> ComplexSpectrogram:
    if spec.shape != mask.real.shape:
        raise DimensionError(f"mask shape {mask.real.shape} does not match spectrogram {spec.shape}")
    real = spec.real * mask.real - spec.imag * mask.imag
    imag = spec.real * mask.imag + spec.imag * mask.real
    return ComplexSpectrogram(real, imag, spec.frame_rate)


def power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def fit_noise(noise: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    """Loop the noise with a random start offset and cut it to ``length`` samples."""
    start = int(rng.integers(noise.size))
    idx = (start + np.arange(length)) % noise.size
    return noise[idx]


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float, rng_seed: int) -> Waveform:
    if clean.sample_rate != noise.sample_rate:
        raise ConfigError(f"sample rates differ: {clean.sample_rate} vs {noise.sample_rate}")
    rng = np.random.default_rng(rng_seed)
    segment = fit_noise(noise.samples, clean.samples.size, rng)
    p_clean = power(clean.samples)
    p_noise = power(segment)
    if p_clean <= 0.0 or p_noise <= 0.0:
        raise DegenerateInputError("cannot mix at a target SNR when clean or noise power is zero")
    scale = noise_scale(p_clean, p_noise, snr_db)
    return Waveform(clean.samples + scale * segment, clean.sample_rate)


def noise_scale(p_clean: float, p_noise: float, snr_db: float) -> float:
    return float(np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0))))


def snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    residual = noisy - clean
    return 10.0 * np.log10(power(clean) / power(residual))


def write_wav(path: str | Path, wave: Waveform) -> None:
    pcm = np.clip(np.round(wave.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), wave.sample_rate, pcm)


def read_wav(path: str | Path) -> Waveform:
    rate, data = wavfile.read(str(path))
    if data.ndim > 1:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32767.0
    elif np.issubdtype(data.dtype, np.integer):
        samples = data.astype(np.float64) / float(np.iinfo(data.dtype).max)
    else:
        samples = data.astype(np.float64)
    return Waveform(samples, int(rate))
