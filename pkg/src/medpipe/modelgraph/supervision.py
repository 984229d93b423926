"""Binding criteria to model outputs and target groups, with scheduled weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..errors import MissingTarget, NonFiniteLoss
from ..tensor import Tensor, ops
from .criteria import Criterion


class WeightScheduler:
    """Loss weight as a function of the global optimizer step."""

    schedule_kind = "weight"

    def __call__(self, step: int) -> float:
        raise NotImplementedError


class Constant(WeightScheduler):
    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __call__(self, step: int) -> float:
        return self.value


@dataclass
class CriterionBinding:
    address: str
    target_groups: tuple[str, ...]
    name: str
    criterion: Criterion
    is_loss: bool = True
    schedule: list[tuple[int, WeightScheduler]] = field(default_factory=lambda: [(0, Constant(1.0))])

    def __post_init__(self) -> None:
        self.schedule = sorted(self.schedule, key=lambda item: item[0])

    @property
    def key(self) -> str:
        return f"{self.address}|{';'.join(self.target_groups)}|{self.name}"

    def weight(self, step: int) -> float:
        """The entry with the largest nb_step <= step is active; before the first one the weight is 0."""
        active = None
        for nb_step, sched in self.schedule:
            if nb_step <= step:
                active = sched
        return 0.0 if active is None else active(step)


def compute_losses(
    bindings: Sequence[CriterionBinding],
    outputs: Mapping[str, Tensor],
    targets: Mapping[str, Tensor],
    step: int,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the loss bindings; tracking bindings are reported only."""
    total: Tensor | None = None
    values: dict[str, float] = {}
    for b in bindings:
        if b.address not in outputs:
            raise MissingTarget(f"no output collected for address '{b.address}'")
        missing = [g for g in b.target_groups if g not in targets]
        if missing:
            raise MissingTarget(f"target group(s) {missing} unavailable for {b.key}")
        value = b.criterion(outputs[b.address], *(targets[g] for g in b.target_groups))
        scalar = float(value.data)
        if not math.isfinite(scalar):
            raise NonFiniteLoss(step, b.key)
        values[b.key] = scalar
        if b.is_loss:
            term = ops.mul_scalar(value, b.weight(step))
            total = term if total is None else ops.add(total, term)
    if total is None:
        total = Tensor(0.0, dtype="float32")
    if not math.isfinite(float(total.data)):
        raise NonFiniteLoss(step)
    return total, values
