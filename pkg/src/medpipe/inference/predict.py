"""The PREDICTION command: patch inference with TTA, reduction and model ensembling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..config.build import build_model, build_reduction, build_transforms
from ..config.document import ConfigDocument, default_registry
from ..config.yamlio import dump_yaml
from ..dataio import DatasetFilenameSpec, Volume, read_metaimage
from ..errors import CheckpointLoadError, MedpipeError
from ..patch import Accumulator
from ..pipeline import (
    augment,
    dataset_plan,
    deaugment,
    draw_view,
    model_input,
    open_dataset,
    patch_geometry,
    preprocess_case,
    restore_axis,
    rng_for,
)
from ..tensor import Tensor
from ..trainer.checkpoint import inference_parameters, latest_checkpoint
from ..transform import TransformState, apply_transforms, invert_transforms
from ..workspace import RunLog, Workspace, copy_config
from .reduce import combine_models, reduce

SPATIAL_STEPS = ("ResampleToResolution",)


@dataclass
class OutputSpec:
    address: str
    writer: Any
    before: list
    after: list
    final: list
    reference_src: str
    reference_dest: str
    directory: Path
    ext: str
    group: str
    patch_combine: str | None
    reduction: Any
    inverse_transform: bool


def output_specs(cfg: ConfigDocument, ws: Workspace, registry) -> list[OutputSpec]:
    specs = []
    for address, body in cfg.body["outputs_dataset"].items():
        (writer_name, spec), = body.items()
        writer = registry.build("OutputWriter", spec["name_class"])
        src, _, dest = spec["same_as_group"].partition(":")
        fn = DatasetFilenameSpec.parse(spec["dataset_filename"])
        directory = (ws.predictions / fn.path).resolve()
        if not directory.is_relative_to(ws.predictions.resolve()):
            raise ValueError(f"dataset_filename {spec['dataset_filename']!r} leaves the prediction directory")
        specs.append(OutputSpec(
            address=address,
            writer=writer,
            before=build_transforms(spec["before_reduction_transforms"], registry),
            after=build_transforms(spec["after_reduction_transforms"], registry),
            final=build_transforms(spec["final_transforms"], registry),
            reference_src=src,
            reference_dest=dest or src,
            directory=directory,
            ext=fn.ext,
            group=spec["group"],
            patch_combine=spec["patch_combine"],
            reduction=build_reduction(spec["reduction"], registry),
            inverse_transform=bool(spec["inverse_transform"]),
        ))
    return specs


def resolve_checkpoints(models: Sequence | None, ws: Workspace) -> list[Path]:
    if not models:
        latest = latest_checkpoint(ws.checkpoints)
        if latest is None:
            raise CheckpointLoadError(f"no checkpoint found in {ws.checkpoints}")
        return [latest]
    paths = []
    for m in models:
        p = Path(m)
        for candidate in (p, ws.root / p, ws.checkpoints / p):
            if candidate.is_file():
                paths.append(candidate)
                break
        else:
            raise CheckpointLoadError(f"checkpoint {m} not found")
    return paths


def load_parameters(model, values: dict[str, np.ndarray], path: Path) -> None:
    params = dict(model.named_parameters())
    missing = sorted(set(params) - set(values))
    if missing:
        raise CheckpointLoadError(f"{path.name} lacks parameter(s) {missing[:3]}")
    for name, p in params.items():
        if values[name].shape != p.data.shape:
            raise CheckpointLoadError(
                f"{path.name}: parameter '{name}' has shape {values[name].shape}, model expects {p.data.shape}"
            )
        p.data = values[name].astype(p.data.dtype, copy=False)


def reference_volume(loader, case: str, src: str, fallback_src: str) -> Volume:
    """Geometry source: the ``src`` group file beside the case's input files, else the raw input."""
    if src in loader._cases[case].groups:
        return loader.load(case, src)
    case_dir = loader._cases[case].groups[fallback_src].parent
    ext = loader._cases[case].groups[fallback_src].name.split(".", 1)[1]
    for f in sorted(case_dir.iterdir()):
        if f.is_file() and f.name.lower() == f"{src}.{ext}".lower():
            return read_metaimage(f)
    return loader.load(case, fallback_src)


class Predictor:
    def __init__(self, cfg: ConfigDocument, workspace, registry=None, seed: int | None = None,
                 models: Sequence | None = None, verbose: bool = False):
        if cfg.kind != "Prediction":
            raise ValueError(f"predict needs a Prediction config, got {cfg.kind}")
        self.cfg = cfg
        self.registry = registry or default_registry()
        body = cfg.body
        self.ws = workspace if isinstance(workspace, Workspace) else Workspace(Path(workspace), body["train_name"])
        if seed is None:
            seed = body["manual_seed"] if body["manual_seed"] is not None else 0
        self.seed = int(seed)
        self.verbose = verbose
        self.checkpoints = resolve_checkpoints(models, self.ws)
        self.models = []
        for path in self.checkpoints:
            model = build_model(cfg, self.registry)
            load_parameters(model, inference_parameters(path), path)
            self.models.append(model)
        self.dataset = body["Dataset"]
        self.plan = dataset_plan(self.dataset, self.registry)
        self.loader = open_dataset(self.dataset, self.ws.root, self.plan, cache=self.dataset["use_cache"])
        self.outputs = output_specs(cfg, self.ws, self.registry)
        for spec in self.outputs:
            if not self.models[0].has_address(spec.address):
                raise MedpipeError(f"outputs_dataset address '{spec.address}' does not exist in the model")
        self.combine = build_reduction(body["combine"], self.registry)
        self.batch_size = int(self.dataset["batch_size"])

    def views(self, case: str) -> list[list]:
        out = [[]]
        for bi, block in enumerate(self.plan.augmentations):
            for k in range(block.nb):
                out.append(draw_view(self.plan.augmentations, bi, rng_for(self.seed, "tta", case, bi, k)))
        return out

    def infer_view(self, model, volumes: dict[str, Volume], view: list) -> dict[str, Volume]:
        """One model, one augmentation: reconstructed (de-augmented) volume per output address."""
        vols = {d: augment(v, view) for d, v in volumes.items()}
        ref = vols[self.plan.inputs[0]]
        grid, slab, squeeze = patch_geometry(ref.spatial_shape, self.plan.patch, model.dim)
        addresses = [s.address for s in self.outputs]
        accs: dict[str, Accumulator] = {}
        for start in range(0, len(grid), self.batch_size):
            idx = list(range(start, min(start + self.batch_size, len(grid))))
            x = Tensor(np.stack([model_input(vols, self.plan, grid, i, slab, squeeze) for i in idx]))
            outs = model.forward_collect(x, addresses)
            for spec in self.outputs:
                pred = outs[spec.address].data
                for j, i in enumerate(idx):
                    patch = restore_axis(pred[j], squeeze)
                    if spec.before:
                        patch = apply_transforms(spec.before, Volume(patch)).array
                    if spec.address not in accs:
                        accs[spec.address] = Accumulator(grid, patch.shape[0], spec.patch_combine)
                    accs[spec.address].accumulate(i, patch)
        return {a: deaugment(ref.with_array(acc.finalize()), view) for a, acc in accs.items()}

    def predict_case(self, case: str) -> list[Path]:
        volumes, states = preprocess_case(self.loader, case, self.plan)
        views = self.views(case)
        per_model: dict[str, list[np.ndarray]] = {s.address: [] for s in self.outputs}
        template: dict[str, Volume] = {}
        for model in self.models:
            per_view: dict[str, list[np.ndarray]] = {s.address: [] for s in self.outputs}
            for view in views:
                for address, vol in self.infer_view(model, volumes, view).items():
                    per_view[address].append(vol.array)
                    template[address] = vol
            for spec in self.outputs:
                per_model[spec.address].append(reduce(per_view[spec.address], spec.reduction))
        written = []
        first_input = self.plan.inputs[0]
        for spec in self.outputs:
            combined = combine_models(per_model[spec.address], self.combine)
            vol = template[spec.address].with_array(np.asarray(combined))
            vol = apply_transforms(spec.after, vol)
            if spec.inverse_transform:
                if spec.reference_dest in states:
                    vol = invert_transforms(states[spec.reference_dest], vol)
                else:
                    # borrowed from the input group: only geometry is undone, never its intensities
                    borrowed = TransformState([r for r in states[first_input].records if r.kind in SPATIAL_STEPS])
                    vol = invert_transforms(borrowed, vol)
            vol = apply_transforms(spec.final, vol)
            src_of_input = self.plan.group(first_input).src
            ref = reference_volume(self.loader, case, spec.reference_src, src_of_input)
            written.append(spec.writer.write(vol, ref, spec.directory, case, spec.group, spec.ext))
        return written

    def run(self) -> list[Path]:
        out_dir = self.ws.ensure(self.ws.predictions)
        copy_config(self.cfg.source_path, dump_yaml(self.cfg.root), out_dir / "Prediction.yml")
        written = []
        with RunLog(out_dir / "log.txt", echo=self.verbose) as log:
            log(f"predict {self.ws.train_name}: {len(self.models)} model(s) "
                f"[{', '.join(p.name for p in self.checkpoints)}], {len(self.loader.index)} case(s), "
                f"{1 + sum(b.nb for b in self.plan.augmentations)} view(s) per model")
            for case in self.loader.index.names():
                try:
                    paths = self.predict_case(case)
                except MedpipeError as exc:
                    exc.case_context = case
                    raise
                written.extend(paths)
                for p in paths:
                    log(f"{case}: wrote {p.relative_to(self.ws.root) if p.is_relative_to(self.ws.root) else p}")
        return written


def predict(cfg: ConfigDocument, workspace, registry=None, seed: int | None = None, models: Sequence | None = None,
            verbose: bool = False) -> list[Path]:
    """Run PREDICTION; returns the written files in case order."""
    return Predictor(cfg, workspace, registry, seed, models, verbose).run()
