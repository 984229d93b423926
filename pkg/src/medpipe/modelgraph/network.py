"""Root of a model tree."""

from __future__ import annotations

from typing import Iterable

from ..errors import ShapeError
from ..tensor import Tensor
from .node import ForwardRun, ModuleNode


class Network(ModuleNode):
    """Model root.  Its own name is not part of any address.

    ``divisor`` is the factor every spatial input extent must be a multiple
    of (pooling depth).
    """

    def __init__(self, name: str, in_channels: int, dim: int = 2, divisor: int = 1):
        super().__init__(name)
        self.in_channels = in_channels
        self.dim = dim
        self.divisor = divisor
        self.nb_class: int | None = None

    def check_input(self, x: Tensor) -> None:
        if x.ndim != 2 + self.dim:
            raise ShapeError(f"{self.name}: expected input with {2 + self.dim} dims, got {x.shape}")
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"{self.name}: expected {self.in_channels} input channels, got {x.shape[1]}")
        bad = [n for n in x.shape[2:] if n % self.divisor]
        if bad:
            raise ShapeError(f"{self.name}: spatial extents {x.shape[2:]} must be multiples of {self.divisor}")

    def __call__(self, x: Tensor) -> Tensor:
        self.check_input(x)
        return ForwardRun().call(self, x, "")

    def forward_collect(self, x: Tensor, addresses: Iterable[str]) -> dict[str, Tensor]:
        """One forward pass, returning the tensor produced at each requested address."""
        wanted = set(addresses)
        for a in wanted:
            self.resolve(a)
        self.check_input(x)
        run = ForwardRun(wanted)
        run.call(self, x, "")
        return {a: run.outputs[a] for a in sorted(wanted)}
