"""Bit-level CSI feedback codec: autoencoder, channel pipeline, link metrics."""

from .autograd import Tensor, finite_diff_check, no_grad
from .channel import GenConfig, PreprocState
from .network import Autoencoder, ModelConfig
from .quantizer import BitFlow, CorruptPayloadError, QuantSpec
from .training import Adam, TrainConfig
from .evaluation import LinkConfig, MetricsReport

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Autoencoder",
    "BitFlow",
    "CorruptPayloadError",
    "GenConfig",
    "LinkConfig",
    "MetricsReport",
    "ModelConfig",
    "PreprocState",
    "QuantSpec",
    "Tensor",
    "TrainConfig",
    "finite_diff_check",
    "no_grad",
    "__version__",
]
