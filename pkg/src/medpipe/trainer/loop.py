"""The TRAIN command: deterministic patch-based training of a configured model."""

from __future__ import annotations

import json
import math
import time
from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from ..config.build import build_model, components, criterion_bindings, model_section
from ..config.document import ConfigDocument, default_registry, snapshot
from ..config.validate import validate_cross_refs
from ..dataio import Volume, split_validation, write_metaimage
from ..errors import SchemaError
from ..modelgraph import compute_losses, init_parameters
from ..pipeline import (
    augment,
    dataset_plan,
    draw_view,
    group_channels,
    model_input,
    open_dataset,
    patch_geometry,
    preprocess_case,
    restore_axis,
    rng_for,
    target_patch,
)
from ..tensor import Graph, Tensor, adamw_step, backward
from ..workspace import RunLog, Workspace
from .checkpoint import CheckpointWriter
from .schedule import EarlyStoppingState, early_stopping_check, ema_update, plateau_step

TOTAL = "total"


class Trainer:
    """Holds everything one TRAIN run needs; :meth:`run` executes it."""

    def __init__(self, cfg: ConfigDocument, workspace, registry=None, seed: int | None = None,
                 verbose: bool = False, clock=time.time):
        if cfg.kind != "Train":
            raise ValueError(f"train needs a Train config, got {cfg.kind}")
        self.cfg = cfg
        self.registry = registry or default_registry()
        body = cfg.body
        self.body = body
        self.ws = workspace if isinstance(workspace, Workspace) else Workspace(Path(workspace), body["train_name"])
        if seed is None:
            seed = body["manual_seed"] if body["manual_seed"] is not None else 0
        self.seed = int(seed)
        self.verbose = verbose
        self.clock = clock

        _, self.mbody = model_section(cfg, self.registry)
        self.model = build_model(cfg, self.registry)
        init_parameters(self.model, self.mbody["init_type"], self.mbody["init_gain"], self.seed)
        self.params = dict(self.model.named_parameters())

        dataset = body["Dataset"]
        self.dataset = dataset
        self.plan = dataset_plan(dataset, self.registry)
        self.loader = open_dataset(dataset, self.ws.root, self.plan, shuffle=dataset["shuffle"], seed=self.seed,
                                   cache=dataset["use_cache"])
        names = self.loader.index.names()
        self.train_names, self.val_names = split_validation(names, dataset["validation"], self.ws.root)
        self._prepared: dict[str, dict[str, Volume]] = {}
        first = self.prepared(names[0])
        diags = validate_cross_refs(cfg, self.model, group_channels({d: first[d] for d in self.plan.inputs}),
                                    self.registry)
        if diags:
            raise SchemaError(diags)

        self.bindings = criterion_bindings(self.mbody["outputs_criterions"], self.registry)
        data_log = body["data_log"] or []
        self.data_log = [(e.rsplit("/IMAGES/", 1)[0], int(e.rsplit("/IMAGES/", 1)[1])) for e in data_log]
        wanted = {b.address for b in self.bindings}
        wanted.update(n for n, _ in self.data_log if self.model.has_address(n))
        self.addresses = sorted(wanted)

        opt = self.registry.build("Optimizer", self.mbody["Optimizer"]["name"],
                                  {k: v for k, v in self.mbody["Optimizer"].items() if k != "name"})
        self.opt_state = opt.state()
        self.lr_schedulers = [
            (int(bind.get("nb_step", 0)), sched.state(self.opt_state.lr))
            for _, sched, bind in components("Scheduler", self.mbody["schedulers"], self.registry, ("nb_step",))
        ]
        self.lr_schedulers.sort(key=lambda item: item[0])
        es = body["EarlyStopping"]
        self.early = EarlyStoppingState(**es) if es else None
        self.monitor = es["monitor"] if es else None
        self.monitor_mode = es["mode"] if es else "min"
        self.best_value: float | None = None
        self.ema_decay = float(body["ema_decay"])
        self.ema = {n: p.data.copy() for n, p in self.params.items()} if self.ema_decay > 0 else None
        self.grid_cache: dict[tuple, tuple] = {}
        self.global_step = 0
        self.epoch = 0
        self.stopped = False

    # ------------------------------------------------------------ data

    def prepared(self, case: str) -> dict[str, Volume]:
        if case in self._prepared:
            return self._prepared[case]
        volumes, _ = preprocess_case(self.loader, case, self.plan)
        if self.dataset["use_cache"]:
            self._prepared[case] = volumes
        return volumes

    def geometry(self, volumes: dict[str, Volume]):
        shape = next(iter(volumes.values())).spatial_shape
        key = tuple(shape)
        if key not in self.grid_cache:
            self.grid_cache[key] = patch_geometry(shape, self.plan.patch, self.model.dim)
        return self.grid_cache[key]

    def views(self) -> list[tuple[int, int] | None]:
        out: list[tuple[int, int] | None] = [None]
        for bi, block in enumerate(self.plan.augmentations):
            out.extend((bi, k) for k in range(block.nb))
        return out

    def epoch_samples(self, epoch: int) -> list[tuple[str, tuple | None, int]]:
        samples = []
        for case in self.train_names:
            grid, _, _ = self.geometry(self.prepared(case))
            for view in self.views():
                samples.extend((case, view, i) for i in range(len(grid)))
        order = rng_for(self.seed, "order", epoch).permutation(len(samples))
        return [samples[i] for i in order]

    def view_volumes(self, case: str, view, epoch: int, fetch: int, memo: dict) -> dict[str, Volume]:
        base = self.prepared(case)
        if view is None:
            return base
        bi, k = view
        inline = self.dataset["inline_augmentations"]
        key = (case, view)
        if not inline and key in memo:
            return memo[key]
        parts = (self.seed, "aug", epoch, case, bi, k) + (("fetch", fetch) if inline else ())
        records = draw_view(self.plan.augmentations, bi, rng_for(*parts))
        vols = {d: augment(v, records) for d, v in base.items()}
        if not inline:
            memo[key] = vols
        return vols

    def assemble(self, items: list[tuple[dict[str, Volume], int]]):
        xs, targets = [], defaultdict(list)
        for vols, index in items:
            grid, slab, squeeze = self.geometry(vols)
            xs.append(model_input(vols, self.plan, grid, index, slab, squeeze))
            for g in self.plan.groups:
                targets[g.dest].append(target_patch(vols[g.dest], self.plan, g.dest, grid, index, squeeze))
        x = Tensor(np.stack(xs).astype(np.float32, copy=False))
        return x, {d: Tensor(np.stack(v)) for d, v in targets.items()}

    # ------------------------------------------------------------ optimisation

    def current_lr_scheduler(self):
        active = None
        for nb_step, state in self.lr_schedulers:
            if nb_step <= self.global_step:
                active = state
        return active

    def optimizer_step(self, grads: dict[str, np.ndarray], count: int) -> None:
        avg = {n: g / np.float32(count) for n, g in grads.items()}
        current = {n: p.data for n, p in self.params.items()}
        updated, self.opt_state = adamw_step(current, avg, self.opt_state)
        for n, p in self.params.items():
            p.data = updated[n]
        self.global_step += 1
        if self.ema is not None:
            self.ema = ema_update(self.ema, {n: p.data for n, p in self.params.items()}, self.ema_decay)

    @contextmanager
    def evaluation_weights(self):
        if self.ema is None:
            yield
            return
        raw = {n: p.data for n, p in self.params.items()}
        for n, p in self.params.items():
            p.data = self.ema[n]
        try:
            yield
        finally:
            for n, p in self.params.items():
                p.data = raw[n]

    # ------------------------------------------------------------ validation

    def _batches(self, names):
        items = []
        for case in names:
            vols = self.prepared(case)
            grid, _, _ = self.geometry(vols)
            items.extend((vols, i) for i in range(len(grid)))
        bs = self.dataset["batch_size"]
        return [items[i:i + bs] for i in range(0, len(items), bs)]

    def validate(self, train_window: dict[str, list[float]]) -> dict[str, float]:
        if self.val_names:
            sums: dict[str, float] = defaultdict(float)
            count = 0
            with self.evaluation_weights():
                for batch in self._batches(self.val_names):
                    x, targets = self.assemble(batch)
                    outs = self.model.forward_collect(x, self.addresses)
                    total, values = compute_losses(self.bindings, outs, targets, self.global_step)
                    n = len(batch)
                    sums[TOTAL] += float(total.data) * n
                    for k, v in values.items():
                        sums[k] += v * n
                    count += n
            return {k: v / count for k, v in sums.items()}
        return {k: math.fsum(v) / len(v) for k, v in train_window.items() if v}

    def monitored(self, metrics: dict[str, float]) -> float:
        if self.monitor is None:
            return metrics[TOTAL]
        if self.monitor in metrics:
            return metrics[self.monitor]
        for b in self.bindings:
            if b.name == self.monitor and b.key in metrics:
                return metrics[b.key]
        raise KeyError(f"EarlyStopping.monitor '{self.monitor}' matches no loss or metric")

    def improved(self, value: float) -> bool:
        if self.best_value is None:
            return True
        return value > self.best_value if self.monitor_mode == "max" else value < self.best_value

    def dump_data_log(self, stats: Path) -> None:
        if not self.data_log:
            return
        names = self.val_names or self.train_names
        items = []
        for case in names:
            vols = self.prepared(case)
            grid, _, _ = self.geometry(vols)
            items.extend((vols, i) for i in range(len(grid)))
        for name, n in self.data_log:
            chosen = items[:n]
            if not chosen:
                continue
            x, targets = self.assemble(chosen)
            if name in targets:
                arrays = targets[name].data
            else:
                with self.evaluation_weights():
                    arrays = self.model.forward_collect(x, [name])[name].data
            squeeze = self.geometry(chosen[0][0])[2]
            out_dir = stats / "Images" / name.replace(":", "-") / f"step_{self.global_step}"
            for i, arr in enumerate(arrays):
                arr = restore_axis(arr, squeeze)
                if arr.dtype == np.int64:
                    arr = arr.astype(np.int32)
                write_metaimage(Volume(np.ascontiguousarray(arr)), out_dir / f"{i}.mha")

    # ------------------------------------------------------------ run

    def run(self) -> Path | None:
        body = self.body
        stats = self.ws.ensure(self.ws.statistics)
        snapshot(self.cfg, self.ws, self.ws.train_name)
        writer = CheckpointWriter(self.ws.checkpoints, body["save_checkpoint_mode"], self.clock)
        nb_per_step = int(self.mbody["nb_batch_per_step"])
        it_validation = body["it_validation"]
        bs = self.dataset["batch_size"]
        with RunLog(stats / "log.txt", echo=self.verbose) as log, \
                open(stats / "scalars.jsonl", "a", encoding="utf-8") as scalars:
            log(f"train {self.ws.train_name}: seed {self.seed}, {len(self.train_names)} training case(s), "
                f"{len(self.val_names)} validation case(s), {sum(p.size for p in self.params.values())} parameters")
            window: dict[str, list[float]] = defaultdict(list)

            def emit(name: str, value: float) -> None:
                scalars.write(json.dumps({"step": self.global_step, "epoch": self.epoch, "name": name,
                                          "value": value, "lr": self.opt_state.lr}) + "\n")

            def validation() -> None:
                metrics = self.validate(window)
                window.clear()
                if not metrics:
                    return
                for k in sorted(metrics):
                    emit(f"validation/{k}", metrics[k])
                value = self.monitored(metrics)
                sched = self.current_lr_scheduler()
                if sched is not None:
                    sched.lr = self.opt_state.lr
                    self.opt_state.lr = plateau_step(sched, value)
                saved = None
                if body["save_checkpoint_mode"] == "ALL" or self.improved(value):
                    params = {n: p.data for n, p in self.params.items()}
                    meta = {"train_name": self.ws.train_name, "epoch": self.epoch, "step": self.global_step,
                            "monitor": self.monitor or TOTAL, "value": value, "lr": self.opt_state.lr}
                    saved = writer.save(params, self.ema, meta)
                if self.improved(value):
                    self.best_value = value
                self.dump_data_log(stats)
                line = f"validation epoch {self.epoch} step {self.global_step}: {self.monitor or TOTAL}={value:.6g}"
                log(line + (f", saved {saved.name}" if saved else ""))
                if self.early is not None and early_stopping_check(self.early, value):
                    log(f"early stopping after {self.early.stale} validations without improvement")
                    self.stopped = True

            for epoch in range(body["epochs"]):
                self.epoch = epoch
                samples = self.epoch_samples(epoch)
                memo: dict = {}
                grads: dict[str, np.ndarray] | None = None
                pending: dict[str, list[float]] = defaultdict(list)
                n_accum = 0
                batches = [samples[i:i + bs] for i in range(0, len(samples), bs)]
                epoch_losses = []
                for bi, batch in enumerate(batches):
                    items = [
                        (self.view_volumes(case, view, epoch, bi * bs + j, memo), index)
                        for j, (case, view, index) in enumerate(batch)
                    ]
                    x, targets = self.assemble(items)
                    with Graph() as graph:
                        outs = self.model.forward_collect(x, self.addresses)
                        total, values = compute_losses(self.bindings, outs, targets, self.global_step)
                    g = backward(graph, total, list(self.params.values()))
                    named = {n: g[p] for n, p in self.params.items()}
                    grads = named if grads is None else {n: grads[n] + named[n] for n in grads}
                    n_accum += 1
                    pending[TOTAL].append(float(total.data))
                    for k, v in values.items():
                        pending[k].append(v)
                    if n_accum == nb_per_step or bi == len(batches) - 1:
                        self.optimizer_step(grads, n_accum)
                        for k, vals in pending.items():
                            mean = math.fsum(vals) / len(vals)
                            emit(k, mean)
                            window[k].append(mean)
                        epoch_losses.append(math.fsum(pending[TOTAL]) / len(pending[TOTAL]))
                        grads, n_accum, pending = None, 0, defaultdict(list)
                        if it_validation is not None and self.global_step % it_validation == 0:
                            validation()
                            if self.stopped:
                                break
                if epoch_losses:
                    log(f"epoch {epoch}: mean loss {math.fsum(epoch_losses) / len(epoch_losses):.6g}, "
                        f"lr {self.opt_state.lr:.6g}")
                if it_validation is None and not self.stopped:
                    validation()
                if self.stopped:
                    break
            log(f"finished after {self.global_step} optimizer step(s)")
        return writer.current


def train(cfg: ConfigDocument, workspace, registry=None, seed: int | None = None, verbose: bool = False,
          clock=time.time) -> Path | None:
    """Run TRAIN; returns the final (or best) checkpoint path, None when no epoch ran."""
    return Trainer(cfg, workspace, registry, seed, verbose, clock).run()
