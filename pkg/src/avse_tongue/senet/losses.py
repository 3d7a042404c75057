from __future__ import annotations

import torch

from .model import complex_multiply

RATIO_EPS = 1e-8


def target_mask(noisy: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
    """Bounded complex ratio mask: clean / noisy per bin, squashed by tanh like the network output."""
    nr, ni = noisy[..., 0, :, :], noisy[..., 1, :, :]
    cr, ci = clean[..., 0, :, :], clean[..., 1, :, :]
    den = nr * nr + ni * ni + RATIO_EPS
    real = (cr * nr + ci * ni) / den
    imag = (ci * nr - cr * ni) / den
    return torch.tanh(torch.stack([real, imag], dim=-3))


def se_components(mask, noisy, clean) -> tuple[torch.Tensor, torch.Tensor]:
    """(mask MSE, spectrogram MSE)."""
    l_mask = torch.mean((mask - target_mask(noisy, clean)) ** 2)
    l_stft = torch.mean((complex_multiply(noisy, mask) - clean) ** 2)
    return l_mask, l_stft


def loss_se(mask, noisy, clean, alpha: float) -> torch.Tensor:
    l_mask, l_stft = se_components(mask, noisy, clean)
    return l_mask + alpha * l_stft
