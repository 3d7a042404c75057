"""Generate a small synthetic corpus and look at one utterance from three sides.

Every utterance is rendered from one latent articulator trajectory: the lip
aperture shapes the lip images, the tongue state the ultrasound-like images,
and both together move the resonances of the audio. Pseudo-phoneme labels are
the segment targets of that trajectory.

Run: python demos/02_synthetic_corpus.py --out /tmp/avse_demo_corpus
"""
import argparse
from collections import Counter

import numpy as np

from avse_tongue.synthdata import CorpusCache, GeneratorConfig, generate_corpus

p = argparse.ArgumentParser()
p.add_argument("--out", default="/tmp/avse_demo_corpus")
p.add_argument("--n-train", type=int, default=24)
args = p.parse_args()

cfg = GeneratorConfig.toy(n_train=args.n_train, n_valid=4, n_test=8, noise_seconds=4.0)
manifest = generate_corpus(cfg, args.out)
cache = CorpusCache(manifest)
print(f"corpus at {args.out}, digest {manifest.digest()[:16]}")
for split in ("train", "valid", "test"):
    ids = manifest.ids(split)
    unseen = sum(cache.records[u].unseen_speaker for u in ids)
    print(f"  {split:<5} {len(ids):3d} utterances, {unseen} from held-out speakers")
print(f"  noise: seen {manifest.noise_names('seen')}, unseen {manifest.noise_names('unseen')}")

uid = manifest.ids("train")[0]
utt = cache.utterance(uid)
print(f"\n{uid}: speaker {utt.speaker_id}, {len(utt.clean) / cfg.sample_rate:.2f} s, {len(utt.lip)} frames")
print(f"lip frames {utt.lip.frames.shape}, tongue frames {utt.tongue.frames.shape}")
labels = utt.trajectory.labels
print("pseudo-phoneme label counts:", dict(sorted(Counter(labels.tolist()).items())))


def ascii(img, cols=32):
    # coarse two-level rendering, one character per pixel column block
    step = max(1, img.shape[1] // cols)
    chars = " .:#"
    lo, hi = img.min(), img.max() + 1e-9
    return "\n".join("".join(chars[int(3 * (v - lo) / (hi - lo))] for v in row[::step]) for row in img)


# The most open and the most closed frame.
ap = utt.trajectory.aperture
for name, j in (("most open", int(np.argmax(ap))), ("most closed", int(np.argmin(ap)))):
    print(f"\n{name} lips (frame {j}, aperture {ap[j]:.2f}):")
    print(ascii(utt.lip.frames[j]))
    print(f"tongue at the same frame (state {utt.trajectory.tongue_state[j]:.2f}):")
    print(ascii(utt.tongue.frames[j]))
