"""Teacher -> student distillation losses and the student training entry point."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .errors import ConfigError, DimensionError
from .senet.config import LossWeights

ZERO_ROW = 1e-12


@dataclass
class KDConfig:
    delta1: float = 1.0
    delta2: float = 1.0
    mse_reduction: str = "mean"  # "mean": per-layer element average; "sum": plain squared norm
    teacher_checkpoint: str | None = None

    def __post_init__(self):
        if self.delta1 < 0 or self.delta2 < 0:
            raise ConfigError("delta1 and delta2 must be non-negative")
        if self.mse_reduction not in ("mean", "sum"):
            raise ConfigError(f"mse_reduction must be 'mean' or 'sum', got {self.mse_reduction!r}")

    @classmethod
    def from_weights(cls, w: LossWeights, **kw) -> "KDConfig":
        return cls(delta1=w.delta1, delta2=w.delta2, **kw)


def similarity_matrices(tap: torch.Tensor) -> torch.Tensor:
    """Per-frame batch similarity, S x b x b, each row L2-normalized.

    ``tap`` is b x c x s x f; frame j is flattened to b x (c*f) before the Gram product.
    Rows whose norm is below 1e-12 stay zero.
    """
    b, c, s, f = tap.shape
    frames = tap.permute(2, 0, 1, 3).reshape(s, b, c * f)
    gram = frames @ frames.transpose(1, 2)
    norm = gram.norm(dim=-1, keepdim=True)
    return gram / torch.where(norm < ZERO_ROW, torch.ones_like(norm), norm)


def _check_pairs(taps_tea: Sequence[torch.Tensor], taps_stu: Sequence[torch.Tensor]):
    if len(taps_tea) != len(taps_stu):
        raise DimensionError(f"teacher has {len(taps_tea)} taps, student {len(taps_stu)}")
    for k, (t, s) in enumerate(zip(taps_tea, taps_stu)):
        if t.shape != s.shape:
            raise DimensionError(f"tap {k}: teacher {tuple(t.shape)} vs student {tuple(s.shape)}")


def spkd_loss(taps_tea, taps_stu) -> torch.Tensor:
    _check_pairs(taps_tea, taps_stu)
    b = taps_stu[0].shape[0]
    total = taps_stu[0].new_zeros(())
    for t, s in zip(taps_tea, taps_stu):
        total = total + ((similarity_matrices(t) - similarity_matrices(s)) ** 2).sum()
    return total / (b * b)


def mse_kd_loss(taps_tea, taps_stu, reduction: str = "mean") -> torch.Tensor:
    _check_pairs(taps_tea, taps_stu)
    total = taps_stu[0].new_zeros(())
    for t, s in zip(taps_tea, taps_stu):
        sq = (t - s) ** 2
        total = total + (sq.mean() if reduction == "mean" else sq.sum())
    return total


def kd_total(se_loss, mse_kd, spkd, cfg: KDConfig | LossWeights):
    return se_loss + cfg.delta1 * mse_kd + cfg.delta2 * spkd


def check_tap_shapes(teacher, student, sample) -> None:
    """Run one tiny forward pass through both nets and compare tap shapes."""
    with torch.no_grad():
        t_taps = teacher(**sample).taps
        s_taps = student(**{k: v for k, v in sample.items()
                            if k == "noisy" or k[:-1] in student.cfg.modalities}).taps
    try:
        _check_pairs(t_taps, s_taps)
    except DimensionError as exc:
        raise ConfigError(f"teacher/student taps are incompatible: {exc}") from exc


def train_student(teacher_ckpt, student_cfg, corpus, train_cfg, weights: LossWeights | None = None,
                  run_dir=None, kd_cfg: KDConfig | None = None):
    """Distil a frozen teacher into a student; returns the fit result (best student + log)."""
    from .senet.checkpoint import load_model
    from .training import KDObjective, fit

    teacher, _ = load_model(teacher_ckpt) if not isinstance(teacher_ckpt, torch.nn.Module) else (teacher_ckpt, {})
    weights = weights or LossWeights()
    kd_cfg = kd_cfg or KDConfig.from_weights(weights)
    objective = KDObjective(teacher, weights, kd_cfg)
    return fit(student_cfg, corpus, objective, train_cfg, run_dir=run_dir, check=objective.check)
