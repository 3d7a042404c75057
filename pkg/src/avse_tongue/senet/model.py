"""U-Net style complex-mask estimator with optional lip and tongue streams."""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import AlignmentError, DimensionError, ModalityError
from .config import ModelConfig


def complex_multiply(spec: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Elementwise complex product of (..., 2, F, S) real/imag tensors."""
    sr, si = spec[..., 0, :, :], spec[..., 1, :, :]
    mr, mi = mask[..., 0, :, :], mask[..., 1, :, :]
    return torch.stack([sr * mr - si * mi, sr * mi + si * mr], dim=-3)


class ArticulationBlock(nn.Module):
    """Three strided 3-D convolutions over (time, height, width); time stride is 1."""

    def __init__(self, channels, kernel, slope):
        super().__init__()
        layers = []
        c_in = 3
        for c in channels:
            layers += [nn.Conv3d(c_in, c, kernel, stride=(1, 2, 2), padding=kernel // 2),
                       nn.BatchNorm3d(c), nn.LeakyReLU(slope)]
            c_in = c
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        # b x 3 x S x H x W -> b x C x S x (H'W')
        y = self.net(x)
        b, c, s, h, w = y.shape
        return y.reshape(b, c, s, h * w)


class AudioBlock(nn.Module):
    def __init__(self, channels, slope):
        super().__init__()
        layers = []
        c_in = 2
        for c in channels:
            layers += [nn.Conv2d(c_in, c, 3, stride=(1, 2), padding=1), nn.BatchNorm2d(c), nn.LeakyReLU(slope)]
            c_in = c
        self.net = nn.Sequential(*layers)

    def forward(self, spec):
        # b x 2 x F x S -> b x C x S x F'
        return self.net(spec.transpose(-1, -2))


class FeatureBlock(nn.Module):
    def __init__(self, c_in, c_out, pool, slope):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.norm = nn.BatchNorm2d(c_out)
        self.act = nn.LeakyReLU(slope)
        self.pool = nn.MaxPool2d((1, pool)) if pool > 1 else nn.Identity()

    def forward(self, x):
        return self.pool(self.act(self.norm(self.conv(x))))


class FeatureTrunk(nn.Module):
    def __init__(self, c_in, channels, pools, slope):
        super().__init__()
        blocks = []
        for c, p in zip(channels, pools):
            blocks.append(FeatureBlock(c_in, c, p, slope))
            c_in = c
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x) -> list[torch.Tensor]:
        taps = []
        for block in self.blocks:
            x = block(x)
            taps.append(x)
        return taps


class ArticulationStream(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.block = ArticulationBlock(cfg.articulation_channels, cfg.articulation_kernel, cfg.leaky_slope)
        self.features = FeatureTrunk(cfg.articulation_channels[-1], cfg.feature_channels,
                                     cfg.feature_pool, cfg.leaky_slope)


class AudioStream(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.block = AudioBlock(cfg.audio_channels, cfg.leaky_slope)
        self.features = FeatureTrunk(cfg.audio_channels[-1], cfg.feature_channels,
                                     cfg.feature_pool, cfg.leaky_slope)


class DepthFusion(nn.Module):
    """Concatenate lip and tongue maps on the width axis and project back to one width."""

    def __init__(self, width):
        super().__init__()
        self.proj = nn.Linear(2 * width, width)
        with torch.no_grad():
            eye = torch.eye(width)
            self.proj.weight.copy_(torch.cat([0.5 * eye, 0.5 * eye], dim=1))
            self.proj.bias.zero_()

    def forward(self, lip, tongue):
        if lip.shape != tongue.shape:
            raise DimensionError(f"cannot fuse lip {tuple(lip.shape)} with tongue {tuple(tongue.shape)}")
        return self.proj(torch.cat([lip, tongue], dim=-1))


def fuse_articulation(lip_taps, tongue_taps, fusion: nn.ModuleList | None):
    """Per-depth fusion; with one stream missing the other passes through unchanged."""
    if lip_taps is None:
        return tongue_taps
    if tongue_taps is None:
        return lip_taps
    if len(lip_taps) != len(tongue_taps) or fusion is None or len(fusion) != len(lip_taps):
        raise DimensionError(f"depth mismatch: {len(lip_taps)} lip vs {len(tongue_taps)} tongue taps")
    return [f(l, t) for f, l, t in zip(fusion, lip_taps, tongue_taps)]


class DecoderBlock(nn.Module):
    def __init__(self, c_in, c_out, slope):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.norm = nn.BatchNorm2d(c_out)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x, skip, width):
        y = self.act(self.norm(self.conv(torch.cat([x, skip], dim=1))))
        if y.shape[-1] != width:
            y = F.interpolate(y, size=(y.shape[-2], width), mode="bilinear", align_corners=False)
        return y


@dataclass
class SEOutput:
    mask: torch.Tensor  # b x 2 x F x S, entries in [-1, 1]
    enhanced: torch.Tensor  # b x 2 x F x S
    taps: list[torch.Tensor]  # K feature maps, each b x C x S x D
    early: dict[str, torch.Tensor] = field(default_factory=dict)
    losses: dict[str, torch.Tensor] = field(default_factory=dict)


class SENet(nn.Module):
    """Audio / audio-lip / audio-tongue / audio-lip-tongue complex-mask network.

    Tap order: the seven multimodal encoder maps, one per recurrent layer, then
    the seven decoder maps (deepest first).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.audio = AudioStream(cfg)
        if "lip" in cfg.modalities:
            self.lip = ArticulationStream(cfg)
        if "tongue" in cfg.modalities:
            self.tongue = ArticulationStream(cfg)
        widths = cfg.widths()
        if len(cfg.modalities) == 2:
            self.fuse = nn.ModuleList([DepthFusion(v) for _, v in widths])
        self.has_articulation = bool(cfg.modalities)

        chans = cfg.feature_channels
        deep_width = widths[-1][0] + (widths[-1][1] if self.has_articulation else 0)
        hidden = chans[-1] * deep_width
        self.lstm = nn.ModuleList([nn.LSTM(hidden, hidden, batch_first=True) for _ in range(cfg.lstm_layers)])

        dec = []
        for k in reversed(range(7)):
            c_out = chans[k - 1] if k > 0 else cfg.audio_channels[-1]
            dec.append(DecoderBlock(2 * chans[k], c_out, cfg.leaky_slope))
        self.decoder = nn.ModuleList(dec)
        c = cfg.audio_channels[-1]
        self.head = nn.ModuleList([
            nn.ConvTranspose2d(c, c, 3, stride=(1, 2), padding=1),
            nn.BatchNorm2d(c),
            nn.LeakyReLU(cfg.leaky_slope),
            nn.ConvTranspose2d(c, 2, 3, stride=(1, 2), padding=1),
        ])

    def _stream(self, modality: str) -> ArticulationStream:
        if modality not in self.cfg.modalities:
            raise ModalityError(f"model has no {modality} stream (modalities: {self.cfg.modalities})")
        return getattr(self, modality)

    def articulation_early(self, images3: torch.Tensor, modality: str) -> torch.Tensor:
        """Articulation-block output, b x C x S x D; the memory cut point."""
        if images3.dim() != 5 or images3.shape[1] != 3:
            raise DimensionError(f"{modality} input must be b x 3 x S x H x W, got {tuple(images3.shape)}")
        return self._stream(modality).block(images3)

    def articulation_deep(self, early: torch.Tensor, modality: str) -> list[torch.Tensor]:
        return self._stream(modality).features(early)

    def encode_articulation(self, images3: torch.Tensor, modality: str):
        early = self.articulation_early(images3, modality)
        return early, self.articulation_deep(early, modality)

    def encode_audio(self, spec: torch.Tensor) -> list[torch.Tensor]:
        if spec.dim() != 4 or spec.shape[1] != 2 or spec.shape[2] != self.cfg.freq_bins:
            raise DimensionError(
                f"spectrogram must be b x 2 x {self.cfg.freq_bins} x S, got {tuple(spec.shape)}")
        return self.audio.features(self.audio.block(spec))

    def fuse_articulation(self, lip_taps, tongue_taps):
        return fuse_articulation(lip_taps, tongue_taps, getattr(self, "fuse", None))

    def forward_from_early(self, noisy: torch.Tensor, early: dict[str, torch.Tensor]) -> SEOutput:
        """Run everything downstream of the articulation blocks."""
        audio_taps = self.encode_audio(noisy)
        s = noisy.shape[-1]
        per_mod = {}
        for m in self.cfg.modalities:
            if m not in early:
                raise ModalityError(f"missing {m} input")
            if early[m].shape[-2] != s:
                raise AlignmentError(f"{m} stream has {early[m].shape[-2]} frames, spectrogram has {s}")
            per_mod[m] = self.articulation_deep(early[m], m)
        if self.has_articulation:
            artic = self.fuse_articulation(per_mod.get("lip"), per_mod.get("tongue"))
            skips = [torch.cat([a, v], dim=-1) for a, v in zip(audio_taps, artic)]
        else:
            skips = audio_taps

        taps = list(skips)
        x = skips[-1]
        b, c, s, d = x.shape
        h = x.permute(0, 2, 1, 3).reshape(b, s, c * d)
        for layer in self.lstm:
            h, _ = layer(h)
            taps.append(h.reshape(b, s, c, d).permute(0, 2, 1, 3))
        x = taps[-1]
        for i, block in enumerate(self.decoder):
            k = 6 - i
            width = skips[k - 1].shape[-1] if k > 0 else self.cfg.audio_width
            x = block(x, skips[k], width)
            taps.append(x)
        for layer in self.head:
            x = layer(x)
        mask = torch.tanh(x).transpose(-1, -2)  # b x 2 x F x S
        return SEOutput(mask, complex_multiply(noisy, mask), taps, early)

    def forward(self, noisy: torch.Tensor, lip3: torch.Tensor | None = None,
                tongue3: torch.Tensor | None = None) -> SEOutput:
        early = {}
        for m, x in (("lip", lip3), ("tongue", tongue3)):
            if m in self.cfg.modalities:
                if x is None:
                    raise ModalityError(f"{m} frames are required by this model")
                early[m] = self.articulation_early(x, m)
        return self.forward_from_early(noisy, early)


def build_model(cfg: ModelConfig) -> nn.Module:
    if cfg.memory_slots:
        from ..memnet import MemorySENet
        return MemorySENet(cfg)
    return SENet(cfg)
