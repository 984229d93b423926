"""Tensor values and the append-only tape used for reverse-mode differentiation.

Operations only record onto a tape while a :class:`Graph` is active
(``with Graph() as g: ...``).  Outside of one, every op is a plain numpy
computation, which is what inference uses.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import GraphError

DTYPES = {
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
    "u8": np.dtype(np.uint8),
    "i64": np.dtype(np.int64),
}

_active_graph: contextvars.ContextVar["Graph | None"] = contextvars.ContextVar(
    "medpipe_graph", default=None
)


class Tensor:
    """An N-d array that may take part in a differentiation graph.

    Tensors are treated as immutable once built; ops never write into the
    ``data`` buffer of their inputs.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if not arr.flags.c_contiguous:  # ascontiguousarray would also turn 0-d into 1-d
            arr = np.ascontiguousarray(arr)
        if requires_grad and arr.dtype.kind != "f":
            raise TypeError(f"only floating tensors can require gradients, got {arr.dtype}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, (int, float)):
            return ops.mul_scalar(self, other)
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, (int, float)):
            return ops.mul_scalar(self, 1.0 / other)
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul_scalar(self, -1.0)

    def __pow__(self, exponent: float):
        from . import ops
        return ops.pow_scalar(self, exponent)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def parameter(data, dtype=np.float32, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=True, name=name)


@dataclass
class Node:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Graph:
    """Append-only tape; insertion order is a topological order."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._token = None

    def __enter__(self) -> "Graph":
        self._token = _active_graph.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_graph.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)


def current_graph() -> Graph | None:
    return _active_graph.get()


def record(
    kind: str,
    inputs: Iterable[Tensor],
    out: np.ndarray,
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap ``out`` in a Tensor and append a node when a graph is recording."""
    inputs = tuple(inputs)
    result = Tensor(out)
    graph = _active_graph.get()
    if graph is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        graph.nodes.append(Node(kind, inputs, result, vjp))
    return result


def backward(graph: Graph, loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Return d(loss)/d(param) for every parameter.

    With ``params=None`` the leaves of the graph that require gradients are
    used.  Parameters that the loss does not depend on get a zero gradient.
    """
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced: set[int] = set()
    for node in reversed(graph.nodes):
        produced.add(id(node.output))
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for tensor, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi

    if params is None:
        seen: dict[int, Tensor] = {}
        for node in graph.nodes:
            for t in node.inputs:
                if t.requires_grad and id(t) not in produced:
                    seen.setdefault(id(t), t)
        params = seen.values()
    return {
        p: grads.get(id(p), np.zeros_like(p.data)).astype(p.dtype, copy=False)
        for p in params
    }
