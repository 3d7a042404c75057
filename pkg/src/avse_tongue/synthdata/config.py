from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from ..dsp import StftConfig
from ..errors import ConfigError


@dataclass
class GeneratorConfig:
    """Knobs of the synthetic corpus. ``toy()`` and ``full()`` give the two presets."""

    n_phonemes: int = 8
    duration_s: tuple[float, float] = (2.0, 2.0)
    image_height: int = 16
    image_width: int = 32
    n_seen_speakers: int = 10
    n_unseen_speakers: int = 2
    n_train: int = 200
    n_valid: int = 20
    n_test: int = 40
    segment_frames: tuple[int, int] = (5, 20)
    tongue_deflection: float = 6.0  # pixels between tongue_state 0 and 1
    speckle_shape: float = 6.0  # gamma shape of multiplicative speckle; larger is milder
    noise_seconds: float = 8.0
    babble_talkers: int = 6
    seed: int = 0
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if isinstance(self.stft, dict):
            self.stft = StftConfig(**self.stft)
        self.duration_s = tuple(self.duration_s)
        self.segment_frames = tuple(self.segment_frames)
        self.validate()

    def validate(self):
        if self.n_phonemes < 2:
            raise ConfigError(f"need at least 2 pseudo-phonemes, got {self.n_phonemes}")
        if self.image_height < 8 or self.image_width < 8:
            raise ConfigError(f"images must be at least 8x8, got {self.image_height}x{self.image_width}")
        lo, hi = self.duration_s
        if not 0 < lo <= hi:
            raise ConfigError(f"bad duration range {self.duration_s}")
        if not 1 <= self.segment_frames[0] <= self.segment_frames[1]:
            raise ConfigError(f"bad segment length range {self.segment_frames}")
        if self.n_seen_speakers < 1:
            raise ConfigError("need at least one training speaker")

    @property
    def sample_rate(self) -> int:
        return self.stft.sample_rate

    @property
    def frame_rate(self) -> float:
        return self.stft.frame_rate

    @property
    def n_speakers(self) -> int:
        return self.n_seen_speakers + self.n_unseen_speakers

    def to_dict(self) -> dict:
        d = asdict(self)
        d["duration_s"] = list(self.duration_s)
        d["segment_frames"] = list(self.segment_frames)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def toy(cls, **overrides) -> "GeneratorConfig":
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides) -> "GeneratorConfig":
        kw = dict(image_height=64, image_width=128, tongue_deflection=24.0,
                  duration_s=(1.5, 3.5), n_train=2000, n_valid=200, n_test=400)
        kw.update(overrides)
        return cls(**kw)
