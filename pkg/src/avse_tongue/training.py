"""Shared training loop for the three regimes (plain SE, distillation, memory)."""
from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .distill import KDConfig, check_tap_shapes, kd_total, mse_kd_loss, spkd_loss
from .memnet import mem_total_loss
from .senet.checkpoint import save_checkpoint
from .senet.config import LossWeights, ModelConfig
from .senet.losses import se_components
from .senet.model import build_model
from .synthdata import TEST_SNRS, TRAIN_SNRS, Batch, CorpusCache, CorpusManifest, load_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-3
    plateau_factor: float = 0.1
    plateau_patience: int = 10
    max_frames: int | None = None  # cap on training crop length; None keeps whole utterances
    train_snrs: tuple[float, ...] = TRAIN_SNRS
    valid_snrs: tuple[float, ...] = TEST_SNRS
    metric_subset: int = 0  # validation utterances scored with SegSNR/STOI each epoch
    seed: int = 0
    freeze_memory: bool = False

    def __post_init__(self):
        self.train_snrs = tuple(self.train_snrs)
        self.valid_snrs = tuple(self.valid_snrs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_snrs"] = list(self.train_snrs)
        d["valid_snrs"] = list(self.valid_snrs)
        return d


def batch_tensors(batch: Batch) -> dict[str, torch.Tensor]:
    return {
        "noisy": torch.from_numpy(batch.noisy_spec),
        "clean": torch.from_numpy(batch.clean_spec),
        "lip3": torch.from_numpy(batch.lip3),
        "tongue3": torch.from_numpy(batch.tongue3),
    }


def model_inputs(model, t: dict[str, torch.Tensor], mode: str = "infer") -> dict:
    kw = {"noisy": t["noisy"]}
    mods = model.cfg.modalities
    if "lip" in mods:
        kw["lip3"] = t["lip3"]
    if "tongue" in mods and (not model.cfg.memory_slots or mode == "train"):
        kw["tongue3"] = t["tongue3"]
    if model.cfg.memory_slots:
        kw["mode"] = mode
    return kw


def run_model(model, t: dict[str, torch.Tensor], mode: str = "infer"):
    return model(**model_inputs(model, t, mode))


class SEObjective:
    """Plain mask + spectrogram loss."""

    name = "se"

    def __init__(self, weights: LossWeights):
        self.weights = weights

    def __call__(self, model, t):
        out = run_model(model, t, "train")
        l_mask, l_stft = se_components(out.mask, t["noisy"], t["clean"])
        se = l_mask + self.weights.alpha * l_stft
        return se, {"se": se.item(), "mask": l_mask.item(), "stft": l_stft.item()}


class KDObjective(SEObjective):
    name = "kd"

    def __init__(self, teacher, weights: LossWeights, kd_cfg: KDConfig | None = None):
        super().__init__(weights)
        self.teacher = teacher.eval()
        for p in self.teacher.parameters():
            p.requires_grad_(False)
        self.kd = kd_cfg or KDConfig.from_weights(weights)

    def check(self, student, t):
        check_tap_shapes(self.teacher, student, model_inputs(self.teacher, t))

    def __call__(self, model, t):
        with torch.no_grad():
            t_taps = run_model(self.teacher, t).taps
        out = run_model(model, t, "train")
        l_mask, l_stft = se_components(out.mask, t["noisy"], t["clean"])
        se = l_mask + self.weights.alpha * l_stft
        mse = mse_kd_loss(t_taps, out.taps, self.kd.mse_reduction)
        spkd = spkd_loss(t_taps, out.taps)
        total = kd_total(se, mse, spkd, self.kd)
        return total, {"se": se.item(), "mask": l_mask.item(), "stft": l_stft.item(),
                       "mse_kd": mse.item(), "spkd": spkd.item(), "total": total.item()}


class MemoryObjective(SEObjective):
    name = "memory"

    def __call__(self, model, t):
        out = run_model(model, t, "train")
        l_mask, l_stft = se_components(out.mask, t["noisy"], t["clean"])
        se = l_mask + self.weights.alpha * l_stft
        total = mem_total_loss(se, out.losses["save"], out.losses["align"], self.weights)
        return total, {"se": se.item(), "mask": l_mask.item(), "stft": l_stft.item(),
                       "save": out.losses["save"].item(), "align": out.losses["align"].item(),
                       "total": total.item()}


@dataclass
class FitResult:
    model: torch.nn.Module
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_se: float = float("inf")
    checkpoint: Path | None = None


def validation_batches(cache: CorpusCache, ids, cfg: TrainConfig, stft_cfg, seed: int = 12345):
    """Fixed mixtures so every epoch is scored on identical inputs."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(0, len(ids), cfg.batch_size):
        chunk = ids[i:i + cfg.batch_size]
        out.append(batch_tensors(load_batch(cache, chunk, stft_cfg, cfg.valid_snrs, rng)))
    return out


@torch.no_grad()
def validate(model, batches, objective) -> dict[str, float]:
    """Validation L_SE through the inference path, plus the objective's components in eval mode."""
    model.eval()
    sums: dict[str, float] = {}
    n = 0
    for t in batches:
        out = run_model(model, t, "infer")
        l_mask, l_stft = se_components(out.mask, t["noisy"], t["clean"])
        comps = {"valid_se": (l_mask + objective.weights.alpha * l_stft).item()}
        _, train_comps = objective(model, t)
        comps.update({f"valid_{k}": v for k, v in train_comps.items()})
        w = t["noisy"].shape[0]
        for k, v in comps.items():
            sums[k] = sums.get(k, 0.0) + v * w
        n += w
    return {k: v / n for k, v in sums.items()}


def validation_metrics(model, cache: CorpusCache, ids, snrs) -> dict[str, float]:
    """Mean SegSNR/STOI of enhanced validation mixtures (fixed noise and seed)."""
    from .evaluation import evaluate_corpus
    rep = evaluate_corpus(model, cache, snrs, seed=0, ids=ids)
    return {"valid_segsnr": rep.mean("segsnr"), "valid_stoi": rep.mean("stoi")}


def _write_log(path: Path | None, rec: dict):
    if path is not None:
        with open(path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def fit(model_or_cfg, corpus, objective, cfg: TrainConfig, run_dir=None, check: Callable | None = None,
        start_epoch: int = 0, meta: dict | None = None,
        metric_fn: Callable | None = None) -> FitResult:
    """Minimize ``objective`` with Adam and plateau decay, keeping the best-validation weights.

    With ``epochs == 0`` the initial model is returned with an empty log.
    Otherwise the log starts with an epoch-``start_epoch`` record scored before
    any update, followed by one record per trained epoch.
    """
    torch.manual_seed(cfg.seed)
    model = build_model(model_or_cfg) if isinstance(model_or_cfg, ModelConfig) else model_or_cfg
    cache = corpus if isinstance(corpus, CorpusCache) else CorpusCache(
        corpus if isinstance(corpus, CorpusManifest) else CorpusManifest.load(corpus))
    stft_cfg = cache.gen_cfg.stft
    train_ids = cache.manifest.ids("train")
    valid_ids = cache.manifest.ids("valid")
    rng = np.random.default_rng(cfg.seed)

    run_dir = Path(run_dir) if run_dir is not None else None
    log_path = ckpt_path = None
    if run_dir is not None:
        (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        log_path = run_dir / "log.jsonl"
        ckpt_path = run_dir / "checkpoints" / "best.npz"

    result = FitResult(model)
    if cfg.epochs <= 0:
        if ckpt_path is not None:
            result.checkpoint = save_checkpoint(ckpt_path, model, {**(meta or {}), "epoch": start_epoch})
        return result

    valid = validation_batches(cache, valid_ids, cfg, stft_cfg)
    if check is not None:
        check(model, valid[0])
    if getattr(model, "memory", None) is not None and cfg.freeze_memory:
        from .memnet import set_frozen
        set_frozen(model.memory, True)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(opt, mode="min", factor=cfg.plateau_factor,
                                                       patience=cfg.plateau_patience)

    def record(epoch, train_stats, t0):
        vstats = validate(model, valid, objective)
        rec = {"epoch": epoch, "lr": opt.param_groups[0]["lr"], **train_stats, **vstats,
               "seconds": round(time.time() - t0, 3)}
        if cfg.metric_subset:
            subset = valid_ids[:cfg.metric_subset]
            rec.update(metric_fn(model, cache, subset) if metric_fn is not None
                       else validation_metrics(model, cache, subset, cfg.valid_snrs))
        return rec

    t0 = time.time()
    rec = record(start_epoch, {}, t0)
    result.log.append(rec)
    _write_log(log_path, rec)
    best_state = copy.deepcopy(model.state_dict())
    result.best_valid_se, result.best_epoch = rec["valid_se"], start_epoch

    for epoch in range(start_epoch + 1, start_epoch + cfg.epochs + 1):
        model.train()
        order = rng.permutation(len(train_ids))
        sums: dict[str, float] = {}
        steps = 0
        for i in range(0, len(order), cfg.batch_size):
            ids = [train_ids[j] for j in order[i:i + cfg.batch_size]]
            batch = load_batch(cache, ids, stft_cfg, cfg.train_snrs, rng, max_frames=cfg.max_frames)
            loss, comps = objective(model, batch_tensors(batch))
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            for k, v in comps.items():
                sums[k] = sums.get(k, 0.0) + v
            steps += 1
        train_stats = {f"train_{k}": v / steps for k, v in sums.items()}
        rec = record(epoch, train_stats, t0)
        sched.step(rec["valid_se"])
        result.log.append(rec)
        _write_log(log_path, rec)
        log.info("epoch %d valid_se %.5f", epoch, rec["valid_se"])
        if rec["valid_se"] < result.best_valid_se:
            result.best_valid_se, result.best_epoch = rec["valid_se"], epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    model.eval()
    if ckpt_path is not None:
        result.checkpoint = save_checkpoint(
            ckpt_path, model, {**(meta or {}), "epoch": result.best_epoch, "last_epoch": epoch,
                               "train_config": cfg.to_dict()})
    return result
