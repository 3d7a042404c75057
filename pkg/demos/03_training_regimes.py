"""Train the four regimes on a small corpus and compare them.

1. audio-lip-tongue: the teacher, sees ultrasound tongue frames.
2. audio-lip: the plain student, never sees tongue frames.
3. kd-audio-lip: the same student architecture, also pulled towards the teacher's
   intermediate feature maps (elementwise MSE plus batch-similarity matching).
4. memory-audio-lip: the teacher architecture with its tongue input replaced by
   features recalled from a lip-keyed memory, so inference needs lips only.

The corpus here is tiny, so differences are noisy; the acceptance suite runs the
200-utterance version over three seeds.

Run: python demos/03_training_regimes.py --corpus /tmp/avse_demo_corpus --epochs 4
"""
import argparse
import logging

from avse_tongue.experiments import directional_experiment
from avse_tongue.senet import LossWeights
from avse_tongue.training import TrainConfig

p = argparse.ArgumentParser()
p.add_argument("--corpus", default="/tmp/avse_demo_corpus", help="made by 02_synthetic_corpus.py")
p.add_argument("--epochs", type=int, default=4)
p.add_argument("--seed", type=int, default=0)
p.add_argument("--slots", type=int, default=128)
args = p.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

weights = LossWeights()
print(f"loss weights: {weights}")
scores = directional_experiment(args.corpus, seeds=(args.seed,),
                                train_cfg=TrainConfig(epochs=args.epochs, max_frames=128),
                                weights=weights, memory_slots=args.slots)
print()
print(scores.table())
print()
for better in ("audio-lip-tongue", "kd-audio-lip", "memory-audio-lip"):
    print(f"{better:<18} vs audio-lip:  SegSNR {scores.margin(better, 'audio-lip', 'segsnr'):+.3f} dB  "
          f"STOI {scores.margin(better, 'audio-lip', 'stoi'):+.4f}")
print(f"\n{scores.seconds:.0f} s")
