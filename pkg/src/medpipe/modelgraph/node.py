"""Name-addressable module tree.

Every node is declared at construction and reachable through one
colon-joined address (``UNetBlock_0:Head:Softmax``), so any intermediate
tensor can be requested from a single forward pass.
"""

from __future__ import annotations

import difflib
from typing import Iterable, Iterator

import numpy as np

from ..errors import SpecError, UnresolvedAddress
from ..tensor import Tensor, ops
from ..tensor.core import parameter

SEP = ":"


class ForwardRun:
    """Bookkeeping for one forward pass: which addresses to keep."""

    def __init__(self, wanted: Iterable[str] = ()):
        self.wanted = set(wanted)
        self.outputs: dict[str, Tensor] = {}

    def call(self, node: "ModuleNode", x, address: str):
        y = node.forward(x, self, address)
        if address in self.wanted:
            self.outputs[address] = y
        return y

    def child(self, parent: "ModuleNode", name: str, x, address: str):
        return self.call(parent.children[name], x, f"{address}{SEP}{name}" if address else name)


class ModuleNode:
    """A node with ordered named children and its own parameters."""

    def __init__(self, name: str):
        if not name or SEP in name:
            raise SpecError(f"invalid node name {name!r}")
        self.name = name
        self.children: dict[str, ModuleNode] = {}
        self.params: dict[str, Tensor] = {}

    def add(self, child: "ModuleNode") -> "ModuleNode":
        if child.name in self.children:
            raise SpecError(f"duplicate child '{child.name}' under '{self.name}'")
        self.children[child.name] = child
        return child

    def forward(self, x, run: ForwardRun, address: str):
        for name in self.children:
            x = run.child(self, name, x, address)
        return x

    # ------------------------------------------------------------ addressing

    def named_nodes(self, prefix: str = "") -> Iterator[tuple[str, "ModuleNode"]]:
        for name, child in self.children.items():
            addr = f"{prefix}{SEP}{name}" if prefix else name
            yield addr, child
            yield from child.named_nodes(addr)

    def addresses(self) -> list[str]:
        return [a for a, _ in self.named_nodes()]

    def resolve(self, address: str) -> "ModuleNode":
        node = self
        for seg in address.split(SEP):
            if seg not in node.children:
                close = difflib.get_close_matches(address, self.addresses(), n=1)
                raise UnresolvedAddress(address, close[0] if close else None)
            node = node.children[seg]
        return node

    def has_address(self, address: str) -> bool:
        try:
            self.resolve(address)
        except UnresolvedAddress:
            return False
        return True

    # ------------------------------------------------------------ parameters

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for pname, p in self.params.items():
            yield (f"{prefix}{SEP}{pname}" if prefix else pname), p
        for name, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{SEP}{name}" if prefix else name)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise SpecError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in own.items():
            if state[k].shape != p.shape:
                raise SpecError(f"parameter '{k}' has shape {state[k].shape}, expected {p.shape}")
            p.data = np.ascontiguousarray(state[k], dtype=p.dtype)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, children={list(self.children)})"


# ---------------------------------------------------------------- leaves


class Conv2d(ModuleNode):
    def __init__(self, name, in_channels, out_channels, kernel_size=3, stride=1, padding=1, bias=True):
        super().__init__(name)
        k = kernel_size
        self.stride, self.padding = stride, padding
        self.params["weight"] = parameter(np.zeros((out_channels, in_channels, k, k)))
        if bias:
            self.params["bias"] = parameter(np.zeros(out_channels))

    def forward(self, x, run, address):
        return ops.conv2d(x, self.params["weight"], self.params.get("bias"), self.stride, self.padding)


class ConvTranspose2d(ModuleNode):
    def __init__(self, name, in_channels, out_channels, kernel_size=2, stride=2, bias=True):
        super().__init__(name)
        self.stride = stride
        self.params["weight"] = parameter(np.zeros((in_channels, out_channels, kernel_size, kernel_size)))
        if bias:
            self.params["bias"] = parameter(np.zeros(out_channels))

    def forward(self, x, run, address):
        return ops.conv_transpose2d(x, self.params["weight"], self.params.get("bias"), self.stride, 0)


class MaxPool2d(ModuleNode):
    def __init__(self, name, kernel_size=2):
        super().__init__(name)
        self.kernel_size = kernel_size

    def forward(self, x, run, address):
        return ops.maxpool2d(x, self.kernel_size)


class ReLU(ModuleNode):
    def forward(self, x, run, address):
        return ops.relu(x)


class Softmax(ModuleNode):
    def forward(self, x, run, address):
        return ops.softmax_channel(x)


class Argmax(ModuleNode):
    """Label map over the channel axis, kept as a single channel; not differentiable."""

    def forward(self, x, run, address):
        return Tensor(np.argmax(x.data, axis=1)[:, None].astype(np.int64))


class Concat(ModuleNode):
    def forward(self, xs, run, address):
        return ops.concat_channel(xs)


def init_parameters(root: ModuleNode, init_type: str = "normal", init_gain: float = 0.02,
                    seed: int | None = 0) -> None:
    """Weights ~ N(0, init_gain); biases zero.  Draw order follows parameter names."""
    if init_type != "normal":
        raise SpecError(f"init_type '{init_type}' is not supported (only 'normal')")
    rng = np.random.default_rng(seed)
    for name, p in root.named_parameters():
        if name.endswith("bias"):
            p.data = np.zeros_like(p.data)
        else:
            p.data = (rng.standard_normal(p.shape) * init_gain).astype(p.dtype)
