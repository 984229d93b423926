"""Addressable model trees, the built-in U-Net, and loss bindings."""

from .criteria import MAE, Criterion, Dice, DiceLoss, FocalLoss, Loss, Metric
from .network import Network
from .node import ForwardRun, ModuleNode, init_parameters
from .supervision import Constant, CriterionBinding, WeightScheduler, compute_losses
from .unet import BlockConfig, UNet, UNetSpec, build_unet


def forward_collect(root: Network, x, addresses):
    return root.forward_collect(x, addresses)


__all__ = [
    "BlockConfig",
    "Constant",
    "Criterion",
    "CriterionBinding",
    "Dice",
    "DiceLoss",
    "FocalLoss",
    "ForwardRun",
    "Loss",
    "MAE",
    "Metric",
    "ModuleNode",
    "Network",
    "UNet",
    "UNetSpec",
    "WeightScheduler",
    "build_unet",
    "compute_losses",
    "forward_collect",
    "init_parameters",
]
