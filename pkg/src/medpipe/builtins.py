"""Registration of every built-in component under its config-facing name."""

from __future__ import annotations

from .config.registry import Registry
from .inference.reduce import Mean, Median, WeightedMean
from .inference.writers import OutSameAsGroupDataset
from .modelgraph.criteria import MAE, Dice, DiceLoss, FocalLoss
from .modelgraph.supervision import Constant
from .modelgraph.unet import UNet
from .tensor.optim import AdamW
from .trainer.schedule import ReduceLROnPlateau
from .transform import Argmax, Clip, Flip, Normalize, ResampleToResolution, TensorCast


def register_builtins(registry: Registry) -> Registry:
    registry.register("Model", "UNet", UNet, aliases=("segmentation.UNet.UNet",))
    registry.register("Optimizer", "AdamW", AdamW)
    registry.register("Scheduler", "ReduceLROnPlateau", ReduceLROnPlateau)
    registry.register("Scheduler", "Constant", Constant)
    registry.register("Loss", "MAE", MAE)
    registry.register("Loss", "DiceLoss", DiceLoss)
    registry.register("Loss", "FocalLoss", FocalLoss)
    # shipped focal loss, also reachable under the module-qualified name used in configs
    registry.register("Loss", "FocalLoss:FocalLoss", FocalLoss)
    registry.register("Metric", "Dice", Dice)
    for cls in (Clip, Normalize, ResampleToResolution, TensorCast, Argmax):
        registry.register("Transform", cls.__name__, cls)
    registry.register("Augmentation", "Flip", Flip)
    registry.register("OutputWriter", "OutSameAsGroupDataset", OutSameAsGroupDataset)
    for cls in (Mean, Median, WeightedMean):
        registry.register("Reduction", cls.__name__, cls)
    return registry
