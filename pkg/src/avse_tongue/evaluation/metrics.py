"""Objective speech metrics: segmental SNR and STOI."""
from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.signal import resample_poly

from ..dsp import Waveform
from ..errors import ConfigError, DimensionError, LengthError

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SegSnrConfig:
    segment_ms: float = 30.0
    clamp_min: float = -10.0
    clamp_max: float = 35.0

    def __post_init__(self):
        if self.segment_ms <= 0:
            raise ConfigError("segment length must be positive")
        if not self.clamp_min < self.clamp_max:
            raise ConfigError("clamp_min must be below clamp_max")

    def segment_length(self, sample_rate: int) -> int:
        return max(1, int(round(self.segment_ms * 1e-3 * sample_rate)))


def _samples(x) -> tuple[np.ndarray, int | None]:
    if isinstance(x, Waveform):
        return x.samples, x.sample_rate
    return np.asarray(x, dtype=np.float64), None


def segsnr(reference, estimate, cfg: SegSnrConfig = SegSnrConfig(), sample_rate: int = 16000) -> float:
    """Mean over non-overlapping segments of the clamped per-segment SNR (dB).

    Segments where the reference is exactly silent are skipped.
    """
    ref, sr_r = _samples(reference)
    est, sr_e = _samples(estimate)
    if ref.shape != est.shape:
        raise DimensionError(f"reference has {ref.size} samples, estimate {est.size}")
    if sr_r and sr_e and sr_r != sr_e:
        raise DimensionError(f"sample rates differ: {sr_r} vs {sr_e}")
    seg = cfg.segment_length(sr_r or sr_e or sample_rate)
    n = ref.size // seg
    if n == 0:
        raise LengthError(f"signal shorter than one {cfg.segment_ms} ms segment")
    r = ref[:n * seg].reshape(n, seg)
    e = est[:n * seg].reshape(n, seg)
    sig = np.sum(r ** 2, axis=1)
    err = np.sum((r - e) ** 2, axis=1)
    keep = sig > 0
    if not keep.any():
        raise DimensionError("reference is silent in every segment")
    with np.errstate(divide="ignore"):
        ratio = 10.0 * np.log10(sig[keep]) - 10.0 * np.log10(err[keep])
    return float(np.mean(np.clip(ratio, cfg.clamp_min, cfg.clamp_max)))


# standard STOI constants
STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30  # frames per short-time envelope (384 ms)
STOI_BETA = -15.0  # lower signal-to-distortion bound, dB
STOI_DYN_RANGE = 40.0


def third_octave_bands(fs=STOI_FS, nfft=STOI_NFFT, num_bands=STOI_BANDS, min_freq=STOI_MIN_FREQ):
    """Band matrix (num_bands x nfft/2+1) and centre frequencies."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(num_bands)
    centres = min_freq * 2.0 ** (k / 3.0)
    low = min_freq * 2.0 ** ((2 * k - 1) / 6.0)
    high = min_freq * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((num_bands, f.size))
    for i in range(num_bands):
        lo = int(np.argmin((f - low[i]) ** 2))
        hi = int(np.argmin((f - high[i]) ** 2))
        obm[i, lo:hi] = 1.0
    return obm, centres


def _hann(n: int) -> np.ndarray:
    return np.hanning(n + 2)[1:-1]


def _frame(x: np.ndarray, size: int, hop: int) -> np.ndarray:
    starts = range(0, x.size - size, hop)
    return np.array([x[i:i + size] for i in starts]).reshape(-1, size)


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    n, size = frames.shape
    out = np.zeros((n - 1) * hop + size) if n else np.zeros(0)
    for i in range(n):
        out[i * hop:i * hop + size] += frames[i]
    return out


def remove_silent_frames(x, y, dyn_range=STOI_DYN_RANGE, size=STOI_FRAME, hop=STOI_FRAME // 2):
    """Drop frames more than ``dyn_range`` dB below the loudest frame of ``x`` (from both signals)."""
    w = _hann(size)
    xf = _frame(x, size, hop) * w
    yf = _frame(y, size, hop) * w
    energy = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + EPS)
    keep = energy > energy.max() - dyn_range
    return _overlap_add(xf[keep], hop), _overlap_add(yf[keep], hop)


def _band_envelopes(x: np.ndarray, obm: np.ndarray) -> np.ndarray:
    frames = _frame(x, STOI_FRAME, STOI_FRAME // 2) * _hann(STOI_FRAME)
    spec = np.fft.rfft(frames, n=STOI_NFFT, axis=1).T
    return np.sqrt(obm @ np.abs(spec) ** 2)


RESAMPLE_REJECTION_DB = 60.0


def _antialias_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc as in Octave's ``resample``, which the reference STOI code relies on."""
    cutoff = 1.0 / (2 * max(up, down))
    half = int(np.ceil((RESAMPLE_REJECTION_DB - 8) / (28.714 * cutoff / 10)))
    t = np.arange(-half, half + 1)
    beta = 0.1102 * (RESAMPLE_REJECTION_DB - 8.7)
    h = np.kaiser(2 * half + 1, beta) * 2 * up * cutoff * np.sinc(2 * cutoff * t)
    return h / h.sum()


def resample_to(x: np.ndarray, fs_in: int, fs_out: int) -> np.ndarray:
    if fs_in == fs_out:
        return x
    g = gcd(fs_in, fs_out)
    up, down = fs_out // g, fs_in // g
    return resample_poly(x, up, down, window=_antialias_filter(up, down))


def stoi_min_samples(sample_rate: int) -> int:
    """Shortest input that can hold one full short-time envelope."""
    need_10k = (STOI_SEGMENT + 1) * (STOI_FRAME // 2) + STOI_FRAME
    return int(np.ceil(need_10k * sample_rate / STOI_FS))


def stoi(reference, estimate, sample_rate: int = 16000) -> float:
    """Short-time objective intelligibility of ``estimate`` against clean ``reference``."""
    x, sr_r = _samples(reference)
    y, sr_e = _samples(estimate)
    fs = sr_r or sr_e or sample_rate
    if x.shape != y.shape:
        raise DimensionError(f"reference has {x.size} samples, estimate {y.size}")
    if x.size < stoi_min_samples(fs):
        raise LengthError(f"STOI needs at least {stoi_min_samples(fs)} samples at {fs} Hz, got {x.size}")
    x = resample_to(x, fs, STOI_FS)
    y = resample_to(y, fs, STOI_FS)
    x, y = remove_silent_frames(x, y)

    obm, _ = third_octave_bands()
    x_env = _band_envelopes(x, obm)
    y_env = _band_envelopes(y, obm)
    n_frames = x_env.shape[1]
    if n_frames < STOI_SEGMENT:
        raise LengthError("too little non-silent signal for one STOI envelope segment")

    idx = np.arange(STOI_SEGMENT)[None, :] + np.arange(n_frames - STOI_SEGMENT + 1)[:, None]
    xs = x_env[:, idx].transpose(1, 0, 2)  # segments x bands x N
    ys = y_env[:, idx].transpose(1, 0, 2)
    scale = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + EPS)
    clip = 10.0 ** (-STOI_BETA / 20.0)
    yp = np.minimum(ys * scale, xs * (1.0 + clip))
    yp = yp - yp.mean(axis=2, keepdims=True)
    xs = xs - xs.mean(axis=2, keepdims=True)
    yp /= np.linalg.norm(yp, axis=2, keepdims=True) + EPS
    xs /= np.linalg.norm(xs, axis=2, keepdims=True) + EPS
    return float(np.sum(yp * xs) / (xs.shape[0] * xs.shape[1]))
