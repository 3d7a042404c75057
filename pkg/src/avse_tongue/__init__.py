"""Audio-visual speech enhancement with lip and tongue image streams.

Subpackages: ``dsp`` (STFT, masks, mixing), ``synthdata`` (synthetic corpus),
``senet`` (masking network), ``distill`` and ``memnet`` (the two ways of
removing the tongue input at inference), ``evaluation`` (metrics, corpus
scoring, probes) and ``cli``.
"""
from .errors import (AlignmentError, AVSEError, CheckpointFormatError, ConfigError, DataError,
                     DegenerateInputError, DimensionError, LengthError, LoadError, ModalityError)

__version__ = "0.1.0"
