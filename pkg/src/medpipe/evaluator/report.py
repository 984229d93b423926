"""Per-case metric computation and the JSON reports."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any

from ..config.build import build_transforms, components
from ..config.document import ConfigDocument, default_registry
from ..config.yamlio import dump_yaml
from ..dataio import CaseLoader, DatasetFilenameSpec, index_dataset, split_validation
from ..tensor import Tensor
from ..transform import TransformState, apply_transforms
from ..workspace import RunLog, Workspace, copy_config
from .metrics import aggregate

SPLITS = ("TRAIN", "EVALUATION")


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot write non-finite value {x} to a report")
    text = format(x, ".17g")
    if all(c not in text for c in ".en"):
        text += ".0"
    return text


def to_json(value: Any, indent: int = 0) -> str:
    """JSON with fixed 17-significant-digit floats; dict order is kept as given."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f'{pad}"{k}": {to_json(v, indent + 1)}' for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"unsupported report value {value!r}")


def metric_bindings(cfg: ConfigDocument, registry=None) -> list[tuple[str, str, str, Any]]:
    """(target group, prediction group, criterion name, metric) for every declared metric."""
    out = []
    for target, spec in cfg.body["metrics"].items():
        for pred, loader in spec["targets_criterions"].items():
            for name, metric, _ in components("Metric", loader["criterions_loader"], registry):
                out.append((target, pred, name, metric))
    return out


def case_metrics(loader: CaseLoader, case: str, group_transforms: dict[str, tuple[str, list]],
                 bindings) -> dict[str, float]:
    cache = {}

    def volume(group: str):
        if group not in cache:
            src, steps = group_transforms[group]
            cache[group] = apply_transforms(steps, loader.load(case, src), TransformState())
        return cache[group]

    values = {}
    for target, pred, name, metric in bindings:
        gt = volume(target).array[None]
        pr = volume(pred).array[None]
        values[f"{target}|{pred}|{name}"] = float(metric(Tensor(pr), Tensor(gt)).data)
    return dict(sorted(values.items()))


def build_report(per_case: dict[str, dict[str, float]]) -> dict:
    per_case = {c: per_case[c] for c in sorted(per_case)}
    ids = sorted({k for vals in per_case.values() for k in vals})
    summary = {i: aggregate([vals[i] for vals in per_case.values() if i in vals]).to_dict() for i in ids}
    return {"per_case": per_case, "summary": summary}


def evaluate(cfg: ConfigDocument, workspace, registry=None, verbose: bool = False) -> list[Path]:
    """Write ``Evaluations/<train_name>/Metric_<SPLIT>.json`` for every non-empty split."""
    registry = registry or default_registry()
    body = cfg.body
    ws = workspace if isinstance(workspace, Workspace) else Workspace(Path(workspace), body["train_name"])
    out_dir = ws.ensure(ws.evaluations)
    copy_config(cfg.source_path, dump_yaml(cfg.root), out_dir / "Evaluation.yml")
    with RunLog(out_dir / "log.txt", echo=verbose) as log:
        dataset = body["Dataset"]
        group_transforms = {}
        for src, spec in dataset["groups_src"].items():
            for dest, d in spec["groups_dest"].items():
                group_transforms[dest] = (src, build_transforms(d.get("transforms"), registry))
        specs = [DatasetFilenameSpec.parse(s) for s in dataset["dataset_filenames"]]
        index = index_dataset(specs, list(dataset["groups_src"]), subset=dataset.get("subset"),
                              root=ws.root, require_all_sources=True)
        bindings = metric_bindings(cfg, registry)
        log(f"evaluate {ws.train_name}: {len(index)} case(s), {len(bindings)} metric(s)")
        loader = CaseLoader(index)
        per_case = {}
        for case in index.cases:
            per_case[case.name] = case_metrics(loader, case.name, group_transforms, bindings)
            log(f"{case.name}: " + ", ".join(f"{k}={v:.6f}" for k, v in per_case[case.name].items()))
        train, held = split_validation(index.names(), dataset.get("validation"), ws.root)
        written = []
        for split, names in zip(SPLITS, (train, held)):
            if not names:
                continue
            report = build_report({n: per_case[n] for n in names})
            path = out_dir / f"Metric_{split}.json"
            path.write_text(to_json(report) + "\n", encoding="utf-8")
            written.append(path)
            for metric_id, s in report["summary"].items():
                log(f"{split} {metric_id}: mean={s['mean']:.6f} std={s['std']:.6f} count={s['count']}")
    return written
