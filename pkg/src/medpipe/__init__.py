"""YAML-driven training, prediction and evaluation for volumetric segmentation."""

from .config import ConfigDocument, load_config, parse_config, register_extension, serialize
from .errors import MedpipeError
from .workspace import Workspace

__version__ = "0.1.0"


def train(*args, **kwargs):
    from .trainer import train as _train
    return _train(*args, **kwargs)


def predict(*args, **kwargs):
    from .inference import predict as _predict
    return _predict(*args, **kwargs)


def evaluate(*args, **kwargs):
    from .evaluator import evaluate as _evaluate
    return _evaluate(*args, **kwargs)


__all__ = [
    "ConfigDocument",
    "MedpipeError",
    "Workspace",
    "evaluate",
    "load_config",
    "parse_config",
    "predict",
    "register_extension",
    "serialize",
    "train",
]
