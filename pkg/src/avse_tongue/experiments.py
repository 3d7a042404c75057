"""Toy-scale comparison of the training regimes and the memory slot sweep."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .distill import KDConfig
from .evaluation import evaluate_corpus
from .senet import LossWeights, ModelConfig, build_model, load_partial_weights
from .synthdata import TEST_SNRS, CorpusCache, CorpusManifest
from .training import KDObjective, MemoryObjective, SEObjective, TrainConfig, fit

log = logging.getLogger(__name__)

REGIMES = ("audio-lip-tongue", "audio-lip", "kd-audio-lip", "memory-audio-lip")


@dataclass
class RegimeScores:
    segsnr: dict[str, list[float]] = field(default_factory=dict)
    stoi: dict[str, list[float]] = field(default_factory=dict)
    seconds: float = 0.0
    models: dict[int, dict] = field(default_factory=dict)  # seed -> regime -> model, when kept

    def mean(self, regime: str, metric: str = "segsnr") -> float:
        return float(np.mean(getattr(self, metric)[regime]))

    def margin(self, better: str, worse: str, metric: str) -> float:
        """Seed-averaged difference ``better - worse``."""
        return float(np.mean(np.subtract(getattr(self, metric)[better], getattr(self, metric)[worse])))

    def table(self) -> str:
        head = f"{'regime':<18} {'SegSNR':>8} {'STOI':>7}   per-seed SegSNR"
        rows = [head, "-" * len(head)]
        for r in self.segsnr:
            seeds = " ".join(f"{v:7.3f}" for v in self.segsnr[r])
            rows.append(f"{r:<18} {self.mean(r):>8.3f} {self.mean(r, 'stoi'):>7.4f}   {seeds}")
        return "\n".join(rows)

    def to_dict(self) -> dict:
        return {"segsnr": self.segsnr, "stoi": self.stoi, "seconds": self.seconds}


def _cache(corpus) -> CorpusCache:
    if isinstance(corpus, CorpusCache):
        return corpus
    return CorpusCache(corpus if isinstance(corpus, CorpusManifest) else CorpusManifest.load(corpus))


def memory_model(cfg: ModelConfig, pretrained, seed: int):
    """Memory network initialized from a trained audio-lip-tongue model where names and shapes agree."""
    torch.manual_seed(seed)
    model = build_model(cfg)
    load_partial_weights(model, pretrained)
    return model


def train_regimes(corpus, seed: int, train_cfg: TrainConfig, weights: LossWeights = LossWeights(),
                  memory_slots: int = 512, run_root=None, regimes: Sequence[str] = REGIMES) -> dict:
    """Train each regime once for ``seed``; returns regime -> trained model."""
    cache = _cache(corpus)
    cfg = replace(train_cfg, seed=seed)
    img = dict(image_height=cache.gen_cfg.image_height, image_width=cache.gen_cfg.image_width,
               freq_bins=cache.gen_cfg.stft.freq_bins)
    sub = (lambda name: Path(run_root) / f"{name}-seed{seed}") if run_root else (lambda name: None)
    out = {}
    teacher = fit(ModelConfig.toy("audio-lip-tongue", **img), cache, SEObjective(weights), cfg,
                  run_dir=sub("audio-lip-tongue")).model
    out["audio-lip-tongue"] = teacher
    if "audio-lip" in regimes:
        out["audio-lip"] = fit(ModelConfig.toy("audio-lip", **img), cache, SEObjective(weights), cfg,
                               run_dir=sub("audio-lip")).model
    if "kd-audio-lip" in regimes:
        obj = KDObjective(teacher, weights, KDConfig.from_weights(weights))
        out["kd-audio-lip"] = fit(ModelConfig.toy("audio-lip", **img), cache, obj, cfg,
                                  run_dir=sub("kd-audio-lip"), check=obj.check).model
    if "memory-audio-lip" in regimes:
        mcfg = ModelConfig.toy("audio-lip-tongue", memory_slots=memory_slots, **img)
        out["memory-audio-lip"] = fit(memory_model(mcfg, teacher, seed), cache, MemoryObjective(weights), cfg,
                                      run_dir=sub("memory-audio-lip")).model
    return out


def directional_experiment(corpus, seeds: Sequence[int] = (0, 1, 2), train_cfg: TrainConfig = TrainConfig(),
                           weights: LossWeights = LossWeights(), snrs: Sequence[float] = TEST_SNRS,
                           memory_slots: int = 512, run_root=None, keep_models: bool = False) -> RegimeScores:
    """Mean test SegSNR/STOI of every regime for every seed."""
    cache = _cache(corpus)
    scores = RegimeScores()
    t0 = time.time()
    for seed in seeds:
        models = train_regimes(cache, seed, train_cfg, weights, memory_slots, run_root)
        if keep_models:
            scores.models[seed] = models
        for name, model in models.items():
            rep = evaluate_corpus(model, cache, snrs, noise_split="both", seed=seed)
            scores.segsnr.setdefault(name, []).append(rep.mean("segsnr"))
            scores.stoi.setdefault(name, []).append(rep.mean("stoi"))
            log.info("seed %d %s segsnr %.3f stoi %.4f", seed, name, scores.segsnr[name][-1], scores.stoi[name][-1])
    scores.seconds = time.time() - t0
    return scores


@dataclass
class SweepRow:
    slots: int
    best_valid_se: float
    segsnr: float
    stoi: float


def slot_sweep(corpus, pretrained, slots: Sequence[int] = (128, 256, 512), train_cfg: TrainConfig = TrainConfig(),
               weights: LossWeights = LossWeights(), snrs: Sequence[float] = TEST_SNRS, run_root=None,
               eval_ids: Sequence[str] | None = None) -> list[SweepRow]:
    """Train one memory model per slot count from the same pretrained weights."""
    cache = _cache(corpus)
    if isinstance(pretrained, (str, Path)):
        from .senet import load_model
        pretrained, _ = load_model(pretrained)
    base = pretrained.cfg
    rows = []
    for n in slots:
        mcfg = base.replace(memory_slots=int(n))
        model = memory_model(mcfg, pretrained, train_cfg.seed)
        run_dir = Path(run_root) / f"slots-{n}" if run_root else None
        res = fit(model, cache, MemoryObjective(weights), train_cfg, run_dir=run_dir)
        rep = evaluate_corpus(res.model, cache, snrs, seed=train_cfg.seed, ids=eval_ids)
        rows.append(SweepRow(int(n), float(res.best_valid_se), rep.mean("segsnr"), rep.mean("stoi")))
    return rows


def sweep_table(rows: Sequence[SweepRow]) -> str:
    head = f"{'slots':>6} {'valid L_SE':>11} {'SegSNR':>8} {'STOI':>7}"
    lines = [head, "-" * len(head)]
    lines += [f"{r.slots:>6d} {r.best_valid_se:>11.5f} {r.segsnr:>8.3f} {r.stoi:>7.4f}" for r in rows]
    return "\n".join(lines)


def sweep_records(rows: Sequence[SweepRow]) -> str:
    return "".join(json.dumps(r.__dict__, sort_keys=True) + "\n" for r in rows)
