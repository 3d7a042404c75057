"""How the lip/tongue memory addresses, recalls and is probed.

Part one uses a hand-built memory so every number can be checked by eye.
Part two trains a memory model briefly and asks a small classifier whether
pseudo-phoneme identity can be read off raw tongue images, real tongue features
and memory-recalled features.

Run: python demos/04_memory_and_probe.py --corpus /tmp/avse_demo_corpus
"""
import argparse

import numpy as np
import torch

from avse_tongue.evaluation import ProbeConfig, probe_sources, probe_table
from avse_tongue.experiments import memory_model
from avse_tongue.memnet import address, align_loss, recall, save_loss
from avse_tongue.senet import LossWeights, ModelConfig
from avse_tongue.synthdata import CorpusCache, CorpusManifest
from avse_tongue.training import MemoryObjective, SEObjective, TrainConfig, fit

p = argparse.ArgumentParser()
p.add_argument("--corpus", default="/tmp/avse_demo_corpus")
p.add_argument("--epochs", type=int, default=3)
args = p.parse_args()
torch.set_printoptions(precision=3, sci_mode=False)

# -- part one: a four-slot memory ---------------------------------------------
keys = torch.eye(4, 6, dtype=torch.float64)  # lip keys: four orthogonal directions
# tongue values: orthogonal rows of different lengths, so cosine addressing can single one out
values = torch.eye(6, dtype=torch.float64)[[1, 3, 5, 4]] * torch.tensor([[1.0], [2.0], [3.0], [4.0]])
lip_frame = 2.0 * keys[2:3] + 0.1 * keys[0:1]  # mostly slot 2

for gamma in (0.0, 1.0, 10.0, 50.0):
    a = address(lip_frame, keys, gamma)
    print(f"gamma {gamma:5.1f}  addressing {a[0].numpy().round(3)}")
a = address(lip_frame, keys, 50.0)
print("recalled value (gamma 50):", recall(values, a)[0].numpy().round(2), " slot 2 row:", values[2].numpy())

tongue_addr = address(values[2:3], values, 1.0)
print(f"save loss of slot 2 against itself, sharp addressing: "
      f"{save_loss(values[2:3], recall(values, address(values[2:3], values, 200.0))).item():.2e}")
print(f"align loss KL(tongue || lip) at gamma 1: {align_loss(tongue_addr, address(lip_frame, keys, 1.0)).item():.5f}")

# -- part two: probe the trained features --------------------------------------
cache = CorpusCache(CorpusManifest.load(args.corpus))
img = dict(image_height=cache.gen_cfg.image_height, image_width=cache.gen_cfg.image_width)
cfg = TrainConfig(epochs=args.epochs, max_frames=64)
teacher = fit(ModelConfig.toy("audio-lip-tongue", **img), cache, SEObjective(LossWeights()), cfg).model
mem = memory_model(ModelConfig.toy("audio-lip-tongue", memory_slots=128, **img), teacher, seed=0)
mem = fit(mem, cache, MemoryObjective(LossWeights()), cfg).model

ids = cache.manifest.ids("train")
results = probe_sources(cache, mem, ids, cfg=ProbeConfig(epochs=150))
print()
print(probe_table(results))
for src, r in results.items():
    n_cls = r.n_classes
    z_uniform = (r.accuracy - 1 / n_cls) / np.sqrt((1 / n_cls) * (1 - 1 / n_cls) / r.n_test)
    print(f"{src:<26} z against 1/P: {z_uniform:6.2f}")
