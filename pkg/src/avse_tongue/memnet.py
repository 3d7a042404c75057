"""Lip-key / tongue-value memory that recalls tongue features from lip features.

The memory sits right after the articulation blocks. Frames of the
articulation-block output (C x S x D) are flattened to S vectors of size
D' = C * D. Lip frames address the key memory, tongue frames address the
value memory, and the tongue stream downstream of the cut point always
consumes value-memory rows recalled with the *lip* addressing.
"""
from __future__ import annotations

import math

import torch
import torch.nn as nn

from .errors import DegenerateInputError, DimensionError, ModalityError
from .senet.config import LossWeights, ModelConfig
from .senet.model import SENet, SEOutput

NORM_FLOOR = 1e-12
PROB_FLOOR = 1e-9


def frames_of(early: torch.Tensor) -> torch.Tensor:
    """b x C x S x D -> b x S x (C*D)."""
    b, c, s, d = early.shape
    return early.permute(0, 2, 1, 3).reshape(b, s, c * d)


def unframe(vectors: torch.Tensor, channels: int) -> torch.Tensor:
    """b x S x (C*D) -> b x C x S x D."""
    b, s, dd = vectors.shape
    return vectors.reshape(b, s, channels, dd // channels).permute(0, 2, 1, 3)


def cosine_similarity(query: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
    """(..., S, D') x (N, D') -> (..., S, N)."""
    qn = query.norm(dim=-1, keepdim=True)
    kn = keys.norm(dim=-1)
    if (qn < NORM_FLOOR).any() or (kn < NORM_FLOOR).any():
        raise DegenerateInputError("zero-norm query frame or memory slot; cosine similarity undefined")
    return (query @ keys.T) / (qn * kn)


def address(query: torch.Tensor, keys: torch.Tensor, gamma: float) -> torch.Tensor:
    """Softmax over slots of gamma-scaled cosine similarity; one probability vector per frame."""
    if query.shape[-1] != keys.shape[-1]:
        raise DimensionError(f"query width {query.shape[-1]} != slot width {keys.shape[-1]}")
    return torch.softmax(gamma * cosine_similarity(query, keys), dim=-1)


def recall(values: torch.Tensor, addressing: torch.Tensor) -> torch.Tensor:
    """Per frame, the addressing-weighted sum of value rows: (..., S, N) -> (..., S, D')."""
    if addressing.shape[-1] != values.shape[0]:
        raise DimensionError(f"addressing over {addressing.shape[-1]} slots, memory has {values.shape[0]}")
    return addressing @ values


def save_loss(tongue_frames: torch.Tensor, recalled: torch.Tensor) -> torch.Tensor:
    """Mean over frames of the squared Euclidean distance."""
    if tongue_frames.shape != recalled.shape:
        raise DimensionError(f"shape mismatch {tuple(tongue_frames.shape)} vs {tuple(recalled.shape)}")
    return ((tongue_frames - recalled) ** 2).sum(dim=-1).mean()


def align_loss(tongue_addr: torch.Tensor, lip_addr: torch.Tensor) -> torch.Tensor:
    """Mean over frames of KL(tongue addressing || lip addressing)."""
    p = tongue_addr
    q = lip_addr.clamp_min(PROB_FLOOR)
    kl = torch.xlogy(p, p.clamp_min(PROB_FLOOR)) - torch.xlogy(p, q)
    return kl.sum(dim=-1).mean()


def mem_total_loss(se, save, align, weights: LossWeights):
    return se + weights.beta1 * save + weights.beta2 * align


class MemoryBank(nn.Module):
    def __init__(self, slots: int, dim: int, gamma: float = 1.0, generator: torch.Generator | None = None):
        super().__init__()
        scale = 1.0 / math.sqrt(dim)
        self.lip_keys = nn.Parameter(torch.randn(slots, dim, generator=generator) * scale)
        self.tongue_values = nn.Parameter(torch.randn(slots, dim, generator=generator) * scale)
        self.gamma = gamma
        self.frozen = False

    @property
    def slots(self) -> int:
        return self.lip_keys.shape[0]

    @property
    def dim(self) -> int:
        return self.lip_keys.shape[1]


def set_frozen(bank: MemoryBank, frozen: bool = True) -> MemoryBank:
    bank.frozen = bool(frozen)
    for p in bank.parameters():
        p.requires_grad_(not frozen)
        if frozen:
            p.grad = None
    return bank


class MemorySENet(SENet):
    """Audio-lip-tongue network whose tongue stream is fed from the memory."""

    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg)
        self.memory = MemoryBank(cfg.memory_slots, cfg.memory_dim, cfg.memory_gamma)

    def forward(self, noisy, lip3=None, tongue3=None, mode: str = "infer") -> SEOutput:
        return forward_with_memory(noisy, lip3, tongue3, self, self.memory, mode)

    def recalled_tongue(self, lip3: torch.Tensor) -> torch.Tensor:
        """Lip-recalled tongue frames, b x S x D'."""
        q = frames_of(self.articulation_early(lip3, "lip"))
        return recall(self.memory.tongue_values, address(q, self.memory.lip_keys, self.memory.gamma))


def forward_with_memory(noisy, lip3, tongue3, model: SENet, bank: MemoryBank, mode: str = "train") -> SEOutput:
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if lip3 is None:
        raise ModalityError("the memory model needs lip frames in every mode")
    lip_early = model.articulation_early(lip3, "lip")
    channels = lip_early.shape[1]
    lip_q = frames_of(lip_early)
    lip_addr = address(lip_q, bank.lip_keys, bank.gamma)
    recalled = recall(bank.tongue_values, lip_addr)

    losses = {}
    early = {"lip": lip_early, "tongue": unframe(recalled, channels)}
    if mode == "train":
        if tongue3 is None:
            raise ModalityError("training the memory needs tongue frames")
        tongue_early = model.articulation_early(tongue3, "tongue")
        tongue_q = frames_of(tongue_early)
        tongue_addr = address(tongue_q, bank.tongue_values, bank.gamma)
        losses["save"] = save_loss(tongue_q, recall(bank.tongue_values, tongue_addr))
        losses["align"] = align_loss(tongue_addr, lip_addr)
    out = model.forward_from_early(noisy, early)
    out.losses = losses
    out.early = dict(early, recalled=recalled, lip_addressing=lip_addr)
    if mode == "train":
        out.early["tongue_real"] = tongue_early
    return out
