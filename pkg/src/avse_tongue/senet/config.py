"""Network presets and loss weights.

Layer table (toy / full):

====================  ===================  =====================
part                  toy                  full
====================  ===================  =====================
articulation block    3x Conv3d, 8-8-8     3x Conv3d, 32-64-64
                      stride (1,2,2)       stride (1,2,2)
audio block           2x Conv2d, 8-8       2x Conv2d, 32-64
                      stride (1,2)         stride (1,2)
feature blocks        8,8,16,16,16,16,16   64,64,128,128,256,256,256
pooling over width    2,2,2,1,1,1,1        2,2,2,2,1,1,1
recurrent             2 LSTM layers, hidden = channels x width of the deepest block
decoder               mirror of the feature blocks, then 2 transposed convs
====================  ===================  =====================

Time is never strided, so every feature map keeps the spectrogram frame count.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

from ..errors import ConfigError

MODALITY_SETS = {
    "audio": (),
    "audio-lip": ("lip",),
    "audio-tongue": ("tongue",),
    "audio-lip-tongue": ("lip", "tongue"),
}


def parse_modalities(spec) -> tuple[str, ...]:
    if isinstance(spec, str):
        if spec not in MODALITY_SETS:
            raise ConfigError(f"unknown modality set {spec!r}; choose from {sorted(MODALITY_SETS)}")
        return MODALITY_SETS[spec]
    mods = tuple(m for m in ("lip", "tongue") if m in set(spec))
    if set(spec) - {"lip", "tongue"}:
        raise ConfigError(f"unknown modalities {sorted(set(spec) - {'lip', 'tongue'})}")
    return mods


@dataclass
class ModelConfig:
    modalities: tuple[str, ...] = ("lip", "tongue")
    freq_bins: int = 257
    image_height: int = 16
    image_width: int = 32
    articulation_channels: tuple[int, ...] = (8, 8, 8)
    articulation_kernel: int = 3
    audio_channels: tuple[int, ...] = (8, 8)
    feature_channels: tuple[int, ...] = (8, 8, 16, 16, 16, 16, 16)
    feature_pool: tuple[int, ...] = (2, 2, 2, 1, 1, 1, 1)
    lstm_layers: int = 2
    leaky_slope: float = 0.2
    memory_slots: int = 0  # > 0 adds the lip-key / tongue-value memory at the articulation cut point
    memory_gamma: float = 1.0
    preset: str = "toy"

    def __post_init__(self):
        self.modalities = parse_modalities(self.modalities)
        for name in ("articulation_channels", "audio_channels", "feature_channels", "feature_pool"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        if len(self.articulation_channels) != 3:
            raise ConfigError("the articulation block has exactly three strided 3-D conv layers")
        if len(self.audio_channels) != 2:
            raise ConfigError("the audio block has exactly two strided 2-D conv layers")
        if len(self.feature_channels) != 7 or len(self.feature_pool) != 7:
            raise ConfigError("seven feature blocks are required")
        if self.lstm_layers < 1:
            raise ConfigError("need at least one recurrent layer")
        h, w = self.articulation_hw
        if h < 1 or w < 1:
            raise ConfigError(
                f"{self.image_height}x{self.image_width} images are too small for three stride-2 layers")
        if self.audio_width < 1:
            raise ConfigError("frequency axis too small for the audio block")
        d = self.articulation_width
        for p in self.feature_pool:
            d //= p
            if d < 1:
                raise ConfigError("pooling plan collapses the articulation width below 1")
        if self.memory_slots and set(self.modalities) != {"lip", "tongue"}:
            raise ConfigError("the memory model needs both lip and tongue streams")

    @property
    def articulation_hw(self) -> tuple[int, int]:
        h, w = self.image_height, self.image_width
        for _ in range(3):
            h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
        return h, w

    @property
    def articulation_width(self) -> int:
        h, w = self.articulation_hw
        return h * w

    @property
    def memory_dim(self) -> int:
        """Flattened per-frame size of the articulation-block output."""
        return self.articulation_channels[-1] * self.articulation_width

    @property
    def audio_width(self) -> int:
        f = self.freq_bins
        for _ in range(2):
            f = (f - 1) // 2 + 1
        return f

    def widths(self) -> list[tuple[int, int]]:
        """(audio width, articulation width) after each feature block."""
        a, v = self.audio_width, self.articulation_width
        out = []
        for p in self.feature_pool:
            a, v = a // p, v // p
            out.append((a, v))
        return out

    @property
    def n_taps(self) -> int:
        return 7 + self.lstm_layers + 7

    def tap_names(self) -> list[str]:
        return ([f"encoder.{k}" for k in range(7)] + [f"lstm.{k}" for k in range(self.lstm_layers)]
                + [f"decoder.{k}" for k in range(7)])

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **kw) -> "ModelConfig":
        d = self.to_dict()
        d.update(kw)
        return ModelConfig.from_dict(d)

    @classmethod
    def toy(cls, modalities="audio-lip-tongue", **kw) -> "ModelConfig":
        return cls(modalities=parse_modalities(modalities), **kw)

    @classmethod
    def full(cls, modalities="audio-lip-tongue", **kw) -> "ModelConfig":
        base = dict(image_height=64, image_width=128, articulation_channels=(32, 64, 64),
                    audio_channels=(32, 64), feature_channels=(64, 64, 128, 128, 256, 256, 256),
                    feature_pool=(2, 2, 2, 2, 1, 1, 1), preset="full")
        base.update(kw)
        return cls(modalities=parse_modalities(modalities), **base)


@dataclass
class LossWeights:
    alpha: float = 0.01
    delta1: float = 1.0
    delta2: float = 1.0
    beta1: float = 0.01
    beta2: float = 0.001
    gamma: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ConfigError(f"loss weight {k} must be non-negative, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)

