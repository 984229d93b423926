"""Turn normalized config sections into runtime objects."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

from .document import ConfigDocument, default_registry
from .registry import Entry, Registry

WEIGHT_BINDING_KEYS = ("nb_step",)
CRITERION_BINDING_KEYS = ("is_loss", "schedulers")


def components(category: str | tuple[str, ...], mapping: Mapping | None, registry: Registry | None = None,
               binding_keys=()) -> list[tuple[str, Any, dict]]:
    """[(name, instance, binding values)] in declaration order."""
    registry = registry or default_registry()
    cats = (category,) if isinstance(category, str) else category
    out = []
    for name, body in (mapping or {}).items():
        body = body or {}
        binding = {k: body[k] for k in binding_keys if k in body}
        args = {k: v for k, v in body.items() if k not in binding_keys}
        entry = _lookup(registry, cats, name)
        out.append((name, registry.build(entry.category, name, args), binding))
    return out


def _lookup(registry: Registry, categories, name: str) -> Entry:
    last = None
    for cat in categories:
        try:
            return registry.lookup(cat, name)
        except Exception as exc:  # noqa: BLE001 - re-raised below
            last = exc
    raise last


def model_section(cfg: ConfigDocument, registry: Registry | None = None) -> tuple[Entry, dict]:
    registry = registry or default_registry()
    model = cfg.body["Model"]
    entry = registry.lookup("Model", model["classpath"])
    return entry, model[entry.name]


def build_model(cfg: ConfigDocument, registry: Registry | None = None):
    registry = registry or default_registry()
    entry, body = model_section(cfg, registry)
    args = {p.name: body[p.name] for p in entry.params if p.name in body}
    return registry.build("Model", cfg.body["Model"]["classpath"], args)


def build_transforms(mapping: Mapping | None, registry: Registry | None = None) -> list:
    return [inst for _, inst, _ in components("Transform", mapping, registry)]


@dataclass
class AugmentationBlock:
    name: str
    augmentations: list
    nb: int


def build_augmentations(mapping: Mapping | None, registry: Registry | None = None) -> list[AugmentationBlock]:
    blocks = []
    for name, block in (mapping or {}).items():
        augs = [inst for _, inst, _ in components("Augmentation", block.get("data_augmentations"), registry)]
        blocks.append(AugmentationBlock(name, augs, int(block.get("nb", 1))))
    return blocks


def build_reduction(value, registry: Registry | None = None):
    registry = registry or default_registry()
    if isinstance(value, str):
        return registry.build("Reduction", value)
    (name, args), = value.items()
    return registry.build("Reduction", name, args)


def criterion_bindings(criteria: Mapping | None, registry: Registry | None = None,
                       training: bool = True) -> list:
    """CriterionBindings for an ``outputs_criterions`` (or ``metrics``) tree."""
    from ..modelgraph.supervision import Constant, CriterionBinding

    registry = registry or default_registry()
    cats = ("Loss", "Metric") if training else ("Metric",)
    bindings = []
    for address, spec in (criteria or {}).items():
        for targets, loader in spec["targets_criterions"].items():
            keys = CRITERION_BINDING_KEYS if training else ()
            for name, criterion, binding in components(cats, loader["criterions_loader"], registry, keys):
                schedule = []
                scheds = binding.get("schedulers")
                if scheds is None:
                    schedule = [(0, Constant(1.0))]
                else:
                    for sname, sched, sbind in components("Scheduler", scheds, registry, WEIGHT_BINDING_KEYS):
                        schedule.append((int(sbind.get("nb_step", 0)), sched))
                bindings.append(CriterionBinding(
                    address=address,
                    target_groups=tuple(targets.split(";")),
                    name=name,
                    criterion=criterion,
                    is_loss=bool(binding.get("is_loss", False)),
                    schedule=schedule,
                ))
    return bindings
