"""Frame-level classification probes on tongue images and tongue features."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from ..errors import ConfigError, DataError, ModalityError
from ..memnet import frames_of
from ..synthdata import CorpusCache

SOURCES = ("raw-tongue-images", "real-tongue-features", "memory-recalled-features")
TARGETS = ("pseudo-phoneme", "speaker")
MIN_PER_CLASS = 20


@dataclass
class ProbeConfig:
    hidden: tuple[int, int] = (128, 64)
    source: str = "real-tongue-features"
    target: str = "pseudo-phoneme"
    epochs: int = 200
    lr: float = 1e-3
    test_fraction: float = 0.2

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ConfigError("the probe is a 3-layer MLP: give two positive hidden sizes")
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {TARGETS}, got {self.target!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")


@dataclass
class ProbeResult:
    accuracy: float
    chance: float
    n_test: int
    n_classes: int

    @property
    def sigma(self) -> float:
        """Binomial standard deviation of chance-level accuracy on the test set."""
        return float(np.sqrt(self.chance * (1 - self.chance) / self.n_test))

    @property
    def z(self) -> float:
        return (self.accuracy - self.chance) / self.sigma


def _split(n: int, groups, test_fraction: float, rng: np.random.Generator):
    if groups is None:
        perm = rng.permutation(n)
        n_test = max(1, int(round(n * test_fraction)))
        return perm[n_test:], perm[:n_test]
    groups = np.asarray(groups)
    uniq = rng.permutation(np.unique(groups))
    n_test = max(1, int(round(len(uniq) * test_fraction)))
    test_mask = np.isin(groups, uniq[:n_test])
    return np.flatnonzero(~test_mask), np.flatnonzero(test_mask)


def probe(features, labels, cfg: ProbeConfig = ProbeConfig(), seed: int = 0, groups=None) -> ProbeResult:
    """Train a 3-layer MLP on an 80/20 split and return held-out accuracy.

    ``groups`` (e.g. utterance ids) keeps every group on one side of the split.
    Features are standardized with training-split statistics.
    """
    x = np.asarray(features, dtype=np.float32).reshape(len(features), -1)
    y_raw = np.asarray(labels)
    if x.shape[0] != y_raw.shape[0]:
        raise DataError(f"{x.shape[0]} feature rows but {y_raw.shape[0]} labels")
    classes, y = np.unique(y_raw, return_inverse=True)
    if len(classes) < 2:
        raise DataError("probing needs at least two classes")
    rng = np.random.default_rng(seed)
    tr, te = _split(len(y), groups, cfg.test_fraction, rng)
    counts = np.bincount(y[tr], minlength=len(classes))
    if counts.min() < MIN_PER_CLASS:
        bad = classes[int(np.argmin(counts))]
        raise DataError(f"class {bad!r} has {counts.min()} training samples; need at least {MIN_PER_CLASS}")

    mu = x[tr].mean(axis=0)
    sd = x[tr].std(axis=0) + 1e-6
    xt = torch.from_numpy((x - mu) / sd)
    yt = torch.from_numpy(y.astype(np.int64))

    torch.manual_seed(seed)
    h1, h2 = cfg.hidden
    net = nn.Sequential(nn.Linear(x.shape[1], h1), nn.ReLU(), nn.Linear(h1, h2), nn.ReLU(),
                        nn.Linear(h2, len(classes)))
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    tr_t = torch.from_numpy(tr)
    for _ in range(cfg.epochs):
        opt.zero_grad()
        loss = nn.functional.cross_entropy(net(xt[tr_t]), yt[tr_t])
        loss.backward()
        opt.step()
    with torch.no_grad():
        pred = net(xt[torch.from_numpy(te)]).argmax(dim=1).numpy()
    acc = float(np.mean(pred == y[te]))
    chance = float(np.max(np.bincount(y[te], minlength=len(classes))) / len(te))
    return ProbeResult(acc, max(chance, 1.0 / len(classes)), len(te), len(classes))


@torch.no_grad()
def extract_frames(source: str, cache: CorpusCache, ids: Sequence[str], model=None):
    """Per-frame feature matrix plus pseudo-phoneme labels, speaker ids and utterance groups."""
    if source not in SOURCES:
        raise ConfigError(f"source must be one of {SOURCES}, got {source!r}")
    if source != "raw-tongue-images":
        if model is None:
            raise ConfigError(f"source {source!r} needs a trained model")
        if source == "real-tongue-features" and "tongue" not in model.cfg.modalities:
            raise ModalityError("this model has no tongue stream")
        if source == "memory-recalled-features" and not model.cfg.memory_slots:
            raise ModalityError("this model has no memory")
        model.eval()
    feats, phon, spk, grp = [], [], [], []
    for uid in ids:
        utt = cache.utterance(uid)
        if source == "raw-tongue-images":
            f = utt.tongue.frames.reshape(len(utt.tongue), -1)
        elif source == "real-tongue-features":
            t3 = torch.from_numpy(cache.images3(uid, "tongue")[None])
            f = frames_of(model.articulation_early(t3, "tongue"))[0].numpy()
        else:
            l3 = torch.from_numpy(cache.images3(uid, "lip")[None])
            f = model.recalled_tongue(l3)[0].numpy()
        feats.append(np.asarray(f, dtype=np.float32))
        phon.append(utt.trajectory.labels[:len(f)])
        spk.append(np.full(len(f), utt.speaker_id))
        grp.append(np.full(len(f), uid))
    return np.concatenate(feats), np.concatenate(phon), np.concatenate(spk), np.concatenate(grp)


def probe_sources(cache: CorpusCache, model, ids: Sequence[str], target: str = "pseudo-phoneme",
                  sources: Sequence[str] = SOURCES, seed: int = 0, cfg: ProbeConfig | None = None
                  ) -> dict[str, ProbeResult]:
    """Run the same probe on each feature source (utterance-grouped split)."""
    out = {}
    for src in sources:
        c = ProbeConfig(**{**(cfg.__dict__ if cfg else {}), "source": src, "target": target})
        x, phon, spk, grp = extract_frames(src, cache, ids, model)
        out[src] = probe(x, phon if target == "pseudo-phoneme" else spk, c, seed=seed, groups=grp)
    return out


def probe_table(results: dict[str, ProbeResult]) -> str:
    head = f"{'source':<26} {'accuracy':>9} {'chance':>7} {'z':>7} {'n_test':>7}"
    rows = [head, "-" * len(head)]
    for src, r in results.items():
        rows.append(f"{src:<26} {r.accuracy:>9.4f} {r.chance:>7.4f} {r.z:>7.2f} {r.n_test:>7d}")
    return "\n".join(rows)
