"""Prediction: patch inference, test-time augmentation, reduction and writers."""

from .predict import OutputSpec, Predictor, predict
from .reduce import Mean, Median, Reduction, WeightedMean, combine_models, reduce
from .writers import OutputWriter, OutSameAsGroupDataset

__all__ = [
    "Mean",
    "Median",
    "OutSameAsGroupDataset",
    "OutputSpec",
    "OutputWriter",
    "Predictor",
    "Reduction",
    "WeightedMean",
    "combine_models",
    "predict",
    "reduce",
]
