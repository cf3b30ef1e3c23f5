"""Dense co-attention network: float64 autodiff core, bidirectional
image/question attention layers, synthetic planted-rule task, and a CLI."""

from .config import (ConfigError, DataConfig, DcnConfig, RunConfig,
                     TrainConfig, apply_overrides, load_config, paper_dims,
                     save_config)
from .model import DcnModel, ForwardResult, load_checkpoint, save_checkpoint
from .tensor import (EvaluationError, GradCheckReport, ShapeError, Tensor,
                     grad_check, load_tensor, save_tensor)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataConfig", "DcnConfig", "DcnModel", "EvaluationError",
    "ForwardResult", "GradCheckReport", "RunConfig", "ShapeError", "Tensor",
    "TrainConfig", "apply_overrides", "grad_check", "load_checkpoint",
    "load_config", "load_tensor", "paper_dims", "save_checkpoint",
    "save_config", "save_tensor", "__version__",
]
