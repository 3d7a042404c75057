"""Checkpoints as ``.npz`` archives.

Every parameter and buffer is stored under its hierarchical module name
(``audio.block.net.0.weight``, ``memory.lip_keys`` ...). The entry
``__meta__`` holds a UTF-8 JSON document with the model config, its
fingerprint and free-form run metadata.
"""
from __future__ import annotations

import json
import logging
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointFormatError
from .config import ModelConfig

log = logging.getLogger(__name__)
META_KEY = "__meta__"


def save_checkpoint(path: str | Path, model: torch.nn.Module, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    doc = {"model_config": model.cfg.to_dict(), "fingerprint": model.cfg.fingerprint(), **(meta or {})}
    arrays[META_KEY] = np.frombuffer(json.dumps(doc, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError, zipfile.BadZipFile, EOFError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable checkpoint ({exc})") from exc
    raw = arrays.pop(META_KEY, None)
    meta = json.loads(raw.tobytes().decode()) if raw is not None else {}
    return arrays, meta


def load_model(path: str | Path, map_overrides: dict | None = None):
    from .model import build_model

    arrays, meta = read_checkpoint(path)
    if "model_config" not in meta:
        raise CheckpointFormatError(f"{path}: no model config recorded")
    cfg_dict = dict(meta["model_config"])
    cfg_dict.update(map_overrides or {})
    model = build_model(ModelConfig.from_dict(cfg_dict))
    model.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in arrays.items()})
    model.eval()
    return model, meta


@dataclass
class LoadReport:
    matched: list[str]
    unmatched: list[str]  # target entries left at initialization
    ignored: list[str]  # source entries with no home in the target

    def __str__(self):
        return f"{len(self.matched)} matched, {len(self.unmatched)} unmatched, {len(self.ignored)} ignored"


def load_partial_weights(target: torch.nn.Module, source) -> LoadReport:
    """Copy every entry whose name and shape agree; leave the rest untouched.

    ``source`` is a checkpoint path, a module, or a name -> array mapping.
    """
    if isinstance(source, (str, Path)):
        arrays, _ = read_checkpoint(source)
    elif isinstance(source, torch.nn.Module):
        arrays = {k: v.detach().cpu().numpy() for k, v in source.state_dict().items()}
    else:
        arrays = dict(source)
    state = target.state_dict()
    matched, unmatched = [], []
    new_state = {}
    for name, value in state.items():
        src = arrays.get(name)
        if src is not None and tuple(src.shape) == tuple(value.shape):
            new_state[name] = torch.as_tensor(np.array(src), dtype=value.dtype)
            matched.append(name)
        else:
            unmatched.append(name)
    target.load_state_dict(new_state, strict=False)
    ignored = sorted(set(arrays) - set(matched))
    if not matched:
        log.warning("no parameters matched the source checkpoint; target stays at initialization")
    return LoadReport(matched, unmatched, ignored)
