"""Complex-mask speech enhancement network with articulatory image streams."""
from .checkpoint import LoadReport, load_model, load_partial_weights, read_checkpoint, save_checkpoint
from .config import MODALITY_SETS, LossWeights, ModelConfig, parse_modalities
from .losses import loss_se, se_components, target_mask
from .model import SENet, SEOutput, build_model, complex_multiply, fuse_articulation

__all__ = [
    "LoadReport", "LossWeights", "MODALITY_SETS", "ModelConfig", "SENet", "SEOutput", "build_model",
    "complex_multiply", "fuse_articulation", "load_model", "load_partial_weights", "loss_se",
    "parse_modalities", "read_checkpoint", "save_checkpoint", "se_components", "target_mask",
]
