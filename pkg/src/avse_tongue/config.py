"""Run configuration: one YAML document with sections, plus ``section.key=value`` overrides."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .distill import KDConfig
from .dsp import StftConfig
from .errors import ConfigError
from .senet.config import LossWeights, ModelConfig, parse_modalities
from .synthdata import GeneratorConfig
from .training import TrainConfig

SEED_ENV = "AVSE_SEED"
SECTIONS = ("stft", "generator", "model", "loss", "optimizer", "kd", "paths")
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}


@dataclass
class RunConfig:
    name: str = "toy"
    preset: str = "toy"
    seed: int = 0
    workers: int = 1
    stft: dict = field(default_factory=lambda: StftConfig().to_dict())
    generator: dict = field(default_factory=dict)  # overrides on top of the preset
    model: dict = field(default_factory=lambda: {"modalities": "audio-lip-tongue", "memory_slots": 512})
    loss: dict = field(default_factory=lambda: LossWeights().to_dict())
    optimizer: dict = field(default_factory=lambda: {**{k: v for k, v in TrainConfig().to_dict().items()
                                                        if k in _TRAIN_KEYS}, "metric_subset": 4})
    kd: dict = field(default_factory=lambda: {"mse_reduction": "mean"})
    paths: dict = field(default_factory=lambda: {"corpus": "data/toy", "runs": "runs"})

    def __post_init__(self):
        if self.preset not in ("toy", "full"):
            raise ConfigError(f"preset must be 'toy' or 'full', got {self.preset!r}")
        # build everything once so bad values fail before any long computation
        self.stft_config()
        self.generator_config()
        self.model_config()
        self.loss_weights()
        self.train_config()
        self.kd_config()

    # -- typed views -------------------------------------------------------
    def stft_config(self) -> StftConfig:
        try:
            return StftConfig(**self.stft)
        except TypeError as exc:
            raise ConfigError(f"stft section: {exc}") from exc

    def generator_config(self) -> GeneratorConfig:
        base = GeneratorConfig.full() if self.preset == "full" else GeneratorConfig.toy()
        d = base.to_dict()
        d.update(self.generator)
        d.pop("seed", None)
        d["stft"] = self.stft_config()
        try:
            return GeneratorConfig.from_dict({**d, "seed": self.seed})
        except TypeError as exc:
            raise ConfigError(f"generator section: {exc}") from exc

    def model_config(self, modalities: str | None = None, memory_slots: int | None = None) -> ModelConfig:
        gen = self.generator_config()
        kw = dict(self.model)
        mods = parse_modalities(modalities or kw.pop("modalities", "audio-lip-tongue"))
        kw.pop("modalities", None)
        kw.pop("memory_slots", None)  # used only by the memory commands, see default_memory_slots
        kw.update(image_height=gen.image_height, image_width=gen.image_width, freq_bins=gen.stft.freq_bins)
        build = ModelConfig.full if self.preset == "full" else ModelConfig.toy
        try:
            cfg = build(mods, **kw)
        except TypeError as exc:
            raise ConfigError(f"model section: {exc}") from exc
        if memory_slots:
            cfg = cfg.replace(memory_slots=int(memory_slots))
        return cfg

    def default_memory_slots(self) -> int:
        return int(self.model.get("memory_slots", 512))

    def loss_weights(self) -> LossWeights:
        try:
            return LossWeights(**self.loss)
        except TypeError as exc:
            raise ConfigError(f"loss section: {exc}") from exc

    def train_config(self, **overrides) -> TrainConfig:
        d = dict(self.optimizer)
        unknown = set(d) - _TRAIN_KEYS
        if unknown:
            raise ConfigError(f"optimizer section: unknown keys {sorted(unknown)}")
        d.update(overrides)
        d["seed"] = self.seed
        cfg = TrainConfig(**d)
        if cfg.epochs < 0 or cfg.batch_size < 1 or cfg.lr <= 0:
            raise ConfigError("optimizer section: need epochs >= 0, batch_size >= 1, lr > 0")
        return cfg

    def kd_config(self) -> KDConfig:
        w = self.loss_weights()
        return KDConfig(delta1=w.delta1, delta2=w.delta2, **self.kd)

    # -- I/O -----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {"name": self.name, "preset": self.preset, "seed": self.seed, "workers": self.workers,
                **{s: copy.deepcopy(getattr(self, s)) for s in SECTIONS}}

    def resolved(self) -> dict:
        """Fully expanded view recorded next to every checkpoint."""
        d = self.to_dict()
        d["generator"] = self.generator_config().to_dict()
        d["optimizer"] = {k: v for k, v in self.train_config().to_dict().items() if k in _TRAIN_KEYS}
        d["loss"] = self.loss_weights().to_dict()
        return d

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.resolved(), sort_keys=False))
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"name", "preset", "seed", "workers", *SECTIONS}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        defaults = {f.name: (f.default_factory() if callable(f.default_factory) else f.default)
                    for f in fields(cls)}
        merged = dict(defaults)
        for k, v in d.items():
            if k in SECTIONS:
                if v is not None and not isinstance(v, dict):
                    raise ConfigError(f"section {k!r} must be a mapping")
                sec = dict(defaults[k])
                sec.update(v or {})
                merged[k] = sec
            else:
                merged[k] = v
        return cls(**merged)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: list[str] | tuple = ()) -> "RunConfig":
        """Read a YAML file (or defaults), apply ``section.key=value`` overrides and the seed env var."""
        d: dict = {}
        if path is not None:
            try:
                d = yaml.safe_load(Path(path).read_text()) or {}
            except FileNotFoundError as exc:
                raise ConfigError(f"config file {path} does not exist") from exc
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
            if not isinstance(d, dict):
                raise ConfigError(f"{path}: top level must be a mapping")
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            value = yaml.safe_load(raw)
            parts = key.strip().split(".")
            node = d
            for p in parts[:-1]:
                node = node.setdefault(p, {})
                if not isinstance(node, dict):
                    raise ConfigError(f"override {item!r}: {p!r} is not a section")
            node[parts[-1]] = value
        if os.environ.get(SEED_ENV):
            try:
                d["seed"] = int(os.environ[SEED_ENV])
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV} must be an integer") from exc
        return cls.from_dict(d)
