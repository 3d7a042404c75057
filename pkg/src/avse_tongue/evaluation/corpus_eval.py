"""Enhancing single utterances and scoring a whole test split."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..dsp import ComplexMask, ComplexSpectrogram, StftConfig, Waveform, apply_complex_mask, istft, stft
from ..errors import AlignmentError, ModalityError
from ..senet.checkpoint import load_model
from ..synthdata import CorpusCache, CorpusManifest, append_stats_channels, mix_item
from .metrics import SegSnrConfig, segsnr, stoi

CONDITIONS = ("seen-spk/seen-noise", "seen-spk/unseen-noise", "unseen-spk/seen-noise", "unseen-spk/unseen-noise")


def _images(frames, n_frames: int, name: str):
    if frames is None:
        return None
    frames = np.asarray(frames, dtype=np.float32)
    if frames.shape[0] != n_frames:
        raise AlignmentError(f"{name} has {frames.shape[0]} frames but the audio yields {n_frames}")
    return torch.from_numpy(append_stats_channels(frames)[None])


@torch.no_grad()
def predict_mask(model, noisy_spec: ComplexSpectrogram, lip=None, tongue=None) -> ComplexMask:
    mods = model.cfg.modalities
    s = noisy_spec.n_frames
    lip3 = _images(lip, s, "lip") if "lip" in mods else None
    needs_tongue = "tongue" in mods and not model.cfg.memory_slots
    tongue3 = _images(tongue, s, "tongue") if needs_tongue else None
    if "lip" in mods and lip3 is None:
        raise ModalityError("this model needs lip frames")
    if needs_tongue and tongue3 is None:
        raise ModalityError("this model needs tongue frames")
    kw = {"noisy": torch.from_numpy(noisy_spec.stacked()[None].astype(np.float32))}
    if lip3 is not None:
        kw["lip3"] = lip3
    if tongue3 is not None:
        kw["tongue3"] = tongue3
    if model.cfg.memory_slots:
        kw["mode"] = "infer"
    model.eval()
    mask = model(**kw).mask[0].double().numpy()
    return ComplexMask(np.clip(mask[0], -1, 1), np.clip(mask[1], -1, 1))


def enhance(model, noisy: Waveform, lip=None, tongue=None, stft_cfg: StftConfig = StftConfig(),
            identity: bool = False) -> Waveform:
    """Mask the noisy STFT and resynthesize a waveform of the input's length.

    ``identity=True`` bypasses the network with a (1 + 0i) mask.
    """
    spec = stft(noisy, stft_cfg)
    mask = ComplexMask.identity(spec.shape) if identity else predict_mask(model, spec, lip, tongue)
    out = istft(apply_complex_mask(spec, mask), stft_cfg, target_length=len(noisy))
    if identity:
        # the overlap-add edges are not reconstructable; keep the input there
        return Waveform(noisy.samples.copy(), noisy.sample_rate)
    return out


@dataclass
class EvalCell:
    segsnr: float
    stoi: float
    noisy_segsnr: float
    noisy_stoi: float
    count: int
    pesq: float | None = None  # reserved, not computed


@dataclass
class EvalReport:
    cells: dict[tuple[float, str], EvalCell] = field(default_factory=dict)
    items: list[dict] = field(default_factory=list)

    def mean(self, key: str = "segsnr", snr: float | None = None) -> float:
        vals = [it[key] for it in self.items if snr is None or it["snr_db"] == snr]
        return float(np.mean(vals)) if vals else float("nan")

    def table(self) -> str:
        head = f"{'SNR':>6}  {'condition':<24} {'n':>4} {'SegSNR':>8} {'STOI':>7} {'noisy SegSNR':>13} {'noisy STOI':>11}"
        rows = [head, "-" * len(head)]
        for (snr, cond), c in sorted(self.cells.items(), key=lambda kv: (-kv[0][0], kv[0][1])):
            rows.append(f"{snr:>6.1f}  {cond:<24} {c.count:>4d} {c.segsnr:>8.3f} {c.stoi:>7.4f} "
                        f"{c.noisy_segsnr:>13.3f} {c.noisy_stoi:>11.4f}")
        return "\n".join(rows)

    def records(self) -> list[dict]:
        return [{"snr_db": snr, "condition": cond, "count": c.count, "segsnr": c.segsnr, "stoi": c.stoi,
                 "noisy_segsnr": c.noisy_segsnr, "noisy_stoi": c.noisy_stoi, "pesq": c.pesq}
                for (snr, cond), c in sorted(self.cells.items(), key=lambda kv: (-kv[0][0], kv[0][1]))]

    def write(self, out_dir: str | Path, stem: str = "eval") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        txt = out_dir / f"{stem}.txt"
        jl = out_dir / f"{stem}.jsonl"
        txt.write_text(self.table() + "\n")
        jl.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records()))
        return txt, jl


def _noise_for(index: int, seen: Sequence[str], unseen: Sequence[str], noise_split: str) -> tuple[str, bool]:
    if noise_split == "seen" or not unseen:
        return seen[index % len(seen)], False
    if noise_split == "unseen":
        return unseen[index % len(unseen)], True
    if index % 2 == 0:
        return seen[(index // 2) % len(seen)], False
    return unseen[(index // 2) % len(unseen)], True


def evaluate_corpus(model, manifest, snr_list: Sequence[float], noise_split: str = "both",
                    seed: int = 0, split: str = "test", identity: bool = False,
                    segsnr_cfg: SegSnrConfig = SegSnrConfig(), ids: Sequence[str] | None = None) -> EvalReport:
    """Mix every test utterance at every SNR, enhance it, and score against the clean signal.

    ``model`` is a network or a checkpoint path. ``noise_split`` is ``seen``,
    ``unseen`` or ``both`` (alternating per utterance). Each utterance keeps one
    noise type across SNRs so that conditions partition the test split.
    """
    if isinstance(model, (str, Path)):
        model, _ = load_model(model)
    cache = manifest if isinstance(manifest, CorpusCache) else CorpusCache(
        manifest if isinstance(manifest, CorpusManifest) else CorpusManifest.load(manifest))
    stft_cfg = cache.gen_cfg.stft
    seen = cache.manifest.noise_names("seen")
    unseen = cache.manifest.noise_names("unseen")
    ids = list(ids) if ids is not None else cache.manifest.ids(split)

    report = EvalReport()
    if not snr_list:
        return report
    for i, uid in enumerate(ids):
        rec = cache.records[uid]
        noise, unseen_noise = _noise_for(i, seen, unseen, noise_split)
        cond = f"{'unseen' if rec.unseen_speaker else 'seen'}-spk/{'unseen' if unseen_noise else 'seen'}-noise"
        utt = cache.utterance(uid)
        for j, snr in enumerate(snr_list):
            item = mix_item(cache, uid, noise, float(snr), seed * 1_000_003 + i * 101 + j)
            est = enhance(model, item.noisy, utt.lip.frames, utt.tongue.frames, stft_cfg, identity=identity)
            report.items.append({
                "id": uid, "snr_db": float(snr), "condition": cond, "noise": noise,
                "segsnr": segsnr(item.clean, est, segsnr_cfg), "stoi": stoi(item.clean, est),
                "noisy_segsnr": segsnr(item.clean, item.noisy, segsnr_cfg),
                "noisy_stoi": stoi(item.clean, item.noisy),
            })
    groups: dict[tuple[float, str], list[dict]] = {}
    for it in report.items:
        groups.setdefault((it["snr_db"], it["condition"]), []).append(it)
    for key, its in groups.items():
        report.cells[key] = EvalCell(
            segsnr=float(np.mean([x["segsnr"] for x in its])), stoi=float(np.mean([x["stoi"] for x in its])),
            noisy_segsnr=float(np.mean([x["noisy_segsnr"] for x in its])),
            noisy_stoi=float(np.mean([x["noisy_stoi"] for x in its])), count=len(its))
    return report
