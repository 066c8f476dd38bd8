"""Multi-head temperature masked self-attention for image inpainting, on a numpy autograd."""

from .attention import MHTMA, HeadConfig, attention_loop_reference, contextual_attention_forward, mhtma_forward
from .config import ConfigError, TrainConfig
from .tensor import Tensor, no_grad

__all__ = [
    "MHTMA",
    "HeadConfig",
    "Tensor",
    "TrainConfig",
    "ConfigError",
    "attention_loop_reference",
    "contextual_attention_forward",
    "mhtma_forward",
    "no_grad",
]

__version__ = "0.1.0"
