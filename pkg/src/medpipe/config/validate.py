"""Checks that need both the config and the built model tree."""

from __future__ import annotations

import difflib
from typing import Mapping

from ..errors import Diagnostic
from .document import ConfigDocument, default_registry
from .registry import Registry
from .schema import ROOT_KEYS


def _groups(dataset: Mapping) -> set[str]:
    names = set()
    for src, spec in (dataset.get("groups_src") or {}).items():
        names.add(src)
        names.update((spec.get("groups_dest") or {}).keys())
    return names


def _input_groups(dataset: Mapping) -> list[str]:
    out = []
    for spec in (dataset.get("groups_src") or {}).values():
        for dest, d in (spec.get("groups_dest") or {}).items():
            if d.get("is_input"):
                out.append(dest)
    return out


def _address_diag(tree, address: str, path: str) -> Diagnostic | None:
    if tree.has_address(address):
        return None
    close = difflib.get_close_matches(address, tree.addresses(), n=1)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    return Diagnostic(path, f"unresolved address '{address}'{hint}", "reference")


def validate_cross_refs(cfg: ConfigDocument, model_tree=None, group_channels: Mapping[str, int] | None = None,
                        registry: Registry | None = None) -> list[Diagnostic]:
    """Return every cross-reference problem; an empty list means the config is consistent.

    ``group_channels`` gives the channel count of each input group (1 when
    not listed).
    """
    registry = registry or default_registry()
    diags: list[Diagnostic] = []
    top = ROOT_KEYS[cfg.kind]
    body = cfg.body
    dataset = body.get("Dataset") or {}
    groups = _groups(dataset)
    channels = dict(group_channels or {})

    if cfg.kind == "Evaluation":
        for target, spec in body["metrics"].items():
            if target not in groups:
                diags.append(Diagnostic(f"{top}.metrics.{target}", f"group '{target}' is not declared in groups_src", "reference"))
            for pred in spec["targets_criterions"]:
                if pred not in groups:
                    diags.append(Diagnostic(f"{top}.metrics.{target}.targets_criterions.{pred}",
                                            f"group '{pred}' is not declared in groups_src", "reference"))
        return diags

    model = body["Model"]
    entry = registry.lookup("Model", model["classpath"])
    mpath = f"{top}.Model.{entry.name}"
    mbody = model[entry.name]

    criteria = mbody.get("outputs_criterions") or {}
    for address, spec in criteria.items():
        apath = f"{mpath}.outputs_criterions.{address}"
        if model_tree is not None:
            d = _address_diag(model_tree, address, apath)
            if d:
                diags.append(d)
        for targets, loader in spec["targets_criterions"].items():
            tpath = f"{apath}.targets_criterions.{targets}"
            for g in targets.split(";"):
                if g not in groups:
                    diags.append(Diagnostic(tpath, f"target group '{g}' is not declared in groups_src/groups_dest", "reference"))
            for name, cbody in loader["criterions_loader"].items():
                cpath = f"{tpath}.criterions_loader.{name}"
                try:
                    centry = registry.lookup("Loss", name)
                except Exception:  # noqa: BLE001 - metric, checked below
                    centry = None
                if cbody.get("is_loss") and centry is None:
                    diags.append(Diagnostic(f"{cpath}.is_loss", f"{name} is a tracking metric and cannot be a loss", "reference"))
                alpha = cbody.get("alpha")
                nb_class = getattr(model_tree, "nb_class", None) or mbody.get("nb_class")
                if isinstance(alpha, list) and nb_class is not None and len(alpha) != nb_class:
                    diags.append(Diagnostic(f"{cpath}.alpha",
                                            f"alpha has {len(alpha)} entries but the model has nb_class {nb_class}",
                                            "reference"))

    if cfg.kind == "Prediction" and model_tree is not None:
        for address in body["outputs_dataset"]:
            d = _address_diag(model_tree, address, f"{top}.outputs_dataset.{address}")
            if d:
                diags.append(d)
    if cfg.kind == "Train":
        for i, entry_text in enumerate(body.get("data_log") or []):
            name = entry_text.rsplit("/IMAGES/", 1)[0]
            if name in groups:
                continue
            if model_tree is None or not model_tree.has_address(name):
                diags.append(Diagnostic(f"{top}.data_log[{i}]", f"'{name}' is neither a group nor a model address", "reference"))

    inputs = _input_groups(dataset)
    if not inputs:
        diags.append(Diagnostic(f"{top}.Dataset.groups_src", "no group has is_input: true", "reference"))
    patch = dataset.get("Patch")
    e = patch["extend_slice"] if patch else 0
    if patch and e > 0 and sum(1 for p in patch["patch_size"] if p == 1) != 1:
        diags.append(Diagnostic(f"{top}.Dataset.Patch.extend_slice",
                                "extend_slice needs exactly one patch axis of extent 1", "reference"))
    if model_tree is not None and inputs:
        expected = sum(channels.get(g, 1) for g in inputs) * (2 * e + 1)
        have = getattr(model_tree, "in_channels", None)
        if have is not None and have != expected:
            diags.append(Diagnostic(f"{mpath}.channels", f"channel mismatch: expected {expected}", "reference"))
        divisor = getattr(model_tree, "divisor", 1)
        if patch:
            bad = [p for p in patch["patch_size"] if p != 1 and p % divisor]
            if bad:
                diags.append(Diagnostic(f"{top}.Dataset.Patch.patch_size",
                                        f"patch extents must be multiples of {divisor} for this model", "reference"))
    return diags
