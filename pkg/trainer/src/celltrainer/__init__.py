"""Training backend for evocell model descriptors."""

from .build import CellNetwork, build_model, parameter_count
from .config import TrainerConfig, load_config
from .descriptor import Descriptor, DescriptorError, load_descriptor, parse_descriptor
from .training import run_request

__version__ = "0.1.0"

__all__ = [
    "CellNetwork",
    "Descriptor",
    "DescriptorError",
    "TrainerConfig",
    "build_model",
    "load_config",
    "load_descriptor",
    "parameter_count",
    "parse_descriptor",
    "run_request",
]
