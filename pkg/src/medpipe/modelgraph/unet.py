"""Configurable 2D U-Net built as a nested, addressable module tree.

Layout for ``channels = [c0, c1, ..., cL]``::

    UNetBlock_0
      DownConvBlock      c0 -> c1
      DownSample         (MAXPOOL)
      UNetBlock_1        ... recursively, down to UNetBlock_{L-1}
      UpSample           c2 -> c1 (CONV_TRANSPOSE)
      SkipConnection     concat(DownConvBlock, UpSample)
      UpConvBlock        2*c1 -> c1
      Head
        Conv             1x1, c1 -> nb_class
        Softmax
        Argmax           derived label output
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import SpecError, Unsupported
from .node import (
    Argmax,
    Concat,
    Conv2d,
    ConvTranspose2d,
    ForwardRun,
    MaxPool2d,
    ModuleNode,
    ReLU,
    Softmax,
)
from .network import Network


@dataclass
class BlockConfig:
    kernel_size: int = 3
    stride: int = 1
    padding: int = 1
    bias: bool = True
    activation: str = "ReLU"
    norm_mode: str = "NONE"


@dataclass
class UNetSpec:
    channels: list[int]
    nb_class: int
    dim: int = 2
    nb_conv_per_stage: int = 2
    downsample_mode: str = "MAXPOOL"
    upsample_mode: str = "CONV_TRANSPOSE"
    attention: bool = False
    block_type: str = "Conv"
    block: BlockConfig = field(default_factory=BlockConfig)

    def check(self) -> None:
        if len(self.channels) < 2:
            raise SpecError("channels needs at least two entries")
        if any(c <= 0 for c in self.channels):
            raise SpecError(f"channels must be positive, got {self.channels}")
        if self.nb_class < 2:
            raise SpecError("nb_class must be at least 2")
        if self.nb_conv_per_stage < 1:
            raise SpecError("nb_conv_per_stage must be at least 1")
        if self.dim != 2:
            raise Unsupported(f"only dim: 2 is built in, got {self.dim}")
        if self.downsample_mode != "MAXPOOL":
            raise Unsupported(f"downsample_mode {self.downsample_mode} is not built in")
        if self.upsample_mode != "CONV_TRANSPOSE":
            raise Unsupported(f"upsample_mode {self.upsample_mode} is not built in")
        if self.attention:
            raise Unsupported("attention blocks are not built in")
        if self.block_type != "Conv":
            raise Unsupported(f"block_type {self.block_type} is not built in")
        if self.block.activation != "ReLU":
            raise Unsupported(f"activation {self.block.activation} is not built in")
        if self.block.norm_mode != "NONE":
            raise Unsupported(f"norm_mode {self.block.norm_mode} is not built in")
        k, s, p = self.block.kernel_size, self.block.stride, self.block.padding
        if s != 1 or k != 2 * p + 1:
            raise SpecError("BlockConfig must preserve spatial size (stride 1, kernel = 2 * padding + 1)")


class ConvBlock(ModuleNode):
    def __init__(self, name: str, in_ch: int, out_ch: int, spec: UNetSpec):
        super().__init__(name)
        b = spec.block
        for i in range(spec.nb_conv_per_stage):
            self.add(Conv2d(f"Conv_{i}", in_ch if i == 0 else out_ch, out_ch, b.kernel_size, b.stride, b.padding, b.bias))
            self.add(ReLU(f"Activation_{i}"))


class Head(ModuleNode):
    def __init__(self, in_ch: int, nb_class: int, bias: bool):
        super().__init__("Head")
        self.add(Conv2d("Conv", in_ch, nb_class, kernel_size=1, stride=1, padding=0, bias=bias))
        self.add(Softmax("Softmax"))
        self.add(Argmax("Argmax"))

    def forward(self, x, run: ForwardRun, address: str):
        logits = run.child(self, "Conv", x, address)
        probs = run.child(self, "Softmax", logits, address)
        run.child(self, "Argmax", probs, address)
        return probs


class UNetBlock(ModuleNode):
    def __init__(self, level: int, spec: UNetSpec):
        super().__init__(f"UNetBlock_{level}")
        ch = spec.channels
        self.level = level
        self.add(ConvBlock("DownConvBlock", ch[level], ch[level + 1], spec))
        self.bottom = level + 2 >= len(ch)
        if not self.bottom:
            self.add(MaxPool2d("DownSample", 2))
            self.add(UNetBlock(level + 1, spec))
            self.add(ConvTranspose2d("UpSample", ch[level + 2], ch[level + 1], 2, 2, spec.block.bias))
            self.add(Concat("SkipConnection"))
            self.add(ConvBlock("UpConvBlock", 2 * ch[level + 1], ch[level + 1], spec))
        if level == 0:
            self.add(Head(ch[1], spec.nb_class, spec.block.bias))

    def forward(self, x, run, address):
        skip = run.child(self, "DownConvBlock", x, address)
        y = skip
        if not self.bottom:
            y = run.child(self, "DownSample", skip, address)
            y = run.child(self, f"UNetBlock_{self.level + 1}", y, address)
            y = run.child(self, "UpSample", y, address)
            y = run.child(self, "SkipConnection", (skip, y), address)
            y = run.child(self, "UpConvBlock", y, address)
        if "Head" in self.children:
            y = run.child(self, "Head", y, address)
        return y


def build_unet(spec: UNetSpec) -> Network:
    spec.check()
    root = Network("UNet", in_channels=spec.channels[0], dim=spec.dim,
                   divisor=2 ** (len(spec.channels) - 2))
    root.nb_class = spec.nb_class
    root.add(UNetBlock(0, spec))
    return root


def UNet(
    channels: list[int],
    nb_class: int,
    dim: int = 2,
    nb_conv_per_stage: int = 2,
    downsample_mode: str = "MAXPOOL",
    upsample_mode: str = "CONV_TRANSPOSE",
    attention: bool = False,
    block_type: str = "Conv",
    BlockConfig: BlockConfig = BlockConfig(),  # noqa: N803 - config-facing key
) -> Network:
    """Registry factory: keyword names match the YAML keys."""
    return build_unet(UNetSpec(
        channels=list(channels), nb_class=nb_class, dim=dim, nb_conv_per_stage=nb_conv_per_stage,
        downsample_mode=downsample_mode, upsample_mode=upsample_mode, attention=attention,
        block_type=block_type, block=BlockConfig,
    ))
