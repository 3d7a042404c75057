"""Synthetic audio + lip + tongue corpus standing in for recorded articulatory data."""
from .batching import (TEST_SNRS, TRAIN_SNRS, Batch, CorpusCache, append_stats_channels,
                       choice_sampler, load_batch, mix_item)
from .config import GeneratorConfig
from .corpus import (CorpusManifest, Utterance, UtteranceRecord, generate_corpus, load_noise,
                     load_utterance, read_image_array, synthesize_utterance, write_image_array)
from .render import (ImageSequence, SpeakerParams, render_audio, render_lip, render_tongue,
                     resonance_centres)
from .trajectory import LatentTrajectory, phoneme_targets, sample_trajectory

__all__ = [
    "Batch", "CorpusCache", "CorpusManifest", "GeneratorConfig", "ImageSequence",
    "LatentTrajectory", "SpeakerParams", "TEST_SNRS", "TRAIN_SNRS", "Utterance", "UtteranceRecord",
    "append_stats_channels", "choice_sampler", "generate_corpus", "load_batch", "load_noise",
    "load_utterance", "mix_item", "phoneme_targets", "read_image_array", "render_audio",
    "render_lip", "render_tongue", "resonance_centres", "sample_trajectory",
    "synthesize_utterance", "write_image_array",
]
