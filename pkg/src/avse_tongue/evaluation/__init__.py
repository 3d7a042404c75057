from .corpus_eval import CONDITIONS, EvalCell, EvalReport, enhance, evaluate_corpus, predict_mask
from .metrics import SegSnrConfig, segsnr, stoi, stoi_min_samples, third_octave_bands
from .probe import SOURCES, TARGETS, ProbeConfig, ProbeResult, extract_frames, probe, probe_sources, probe_table
