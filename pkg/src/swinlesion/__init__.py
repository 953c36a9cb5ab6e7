"""Swin Transformer lesion classifier on a small numpy autodiff engine."""

from .config import ExperimentConfig, derive_seed, from_dict, load_config
from .model import LesionClassifier
from .tensor import Tensor, no_grad

__all__ = ["ExperimentConfig", "derive_seed", "from_dict", "load_config", "LesionClassifier", "Tensor", "no_grad"]
__version__ = "0.1.0"
