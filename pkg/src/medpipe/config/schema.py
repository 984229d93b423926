"""Schemas of the three configuration kinds.

A schema is a tree of nodes; ``normalize`` walks a loaded YAML tree,
coerces scalars, fills defaults and collects diagnostics instead of
stopping at the first problem.  Component bodies are checked against the
registered constructor signatures.
"""

from __future__ import annotations

import copy
import difflib
import re
from typing import Any, Callable, Literal, Mapping, Optional, Union

from ..errors import Diagnostic, UnknownComponent
from .registry import REQUIRED, CoercionError, Entry, Registry, coerce, is_null


class Context:
    def __init__(self, registry: Registry):
        self.registry = registry
        self.diagnostics: list[Diagnostic] = []

    def add(self, path: str, message: str, kind: str) -> None:
        self.diagnostics.append(Diagnostic(path, message, kind))


def join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


class Node:
    def normalize(self, value, path: str, ctx: Context):
        raise NotImplementedError


class Field:
    def __init__(self, node: Node, default: Any = REQUIRED):
        self.node = node
        self.default = default

    @property
    def required(self) -> bool:
        return self.default is REQUIRED


Check = Callable[[Any, Context], Optional[str]]


class Scalar(Node):
    """A typed value; ``check`` returns an error message for bad values."""

    def __init__(self, ann, check: Check | None = None):
        self.ann = ann
        self.check = check

    def normalize(self, value, path, ctx):
        try:
            value = coerce(value, self.ann)
        except CoercionError as exc:
            ctx.add(path, str(exc), "type")
            return value
        if self.check is not None:
            msg = self.check(value, ctx)
            if msg:
                ctx.add(path, msg, "value")
        return value


class Nullable(Node):
    def __init__(self, inner: Node):
        self.inner = inner

    def normalize(self, value, path, ctx):
        return None if is_null(value) else self.inner.normalize(value, path, ctx)


def _mapping(value, path, ctx) -> bool:
    if isinstance(value, Mapping):
        return True
    ctx.add(path, f"expected a mapping, got {value!r}", "type")
    return False


def _unknown(key, choices, path, ctx) -> None:
    close = difflib.get_close_matches(str(key), list(choices), n=1)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    ctx.add(join(path, key), f"unexpected key{hint}", "unknown")


def merge_ordered(original: Mapping, normalized: Mapping) -> dict:
    """Keys in the order they were written, then defaulted keys."""
    out = {k: normalized[k] for k in original if k in normalized}
    out.update((k, v) for k, v in normalized.items() if k not in out)
    return out


class Section(Node):
    def __init__(self, fields: Mapping[str, Field]):
        self.fields = dict(fields)

    def normalize(self, value, path, ctx):
        if not _mapping(value, path, ctx):
            return value
        out = {}
        for key, v in value.items():
            f = self.fields.get(key)
            if f is None:
                _unknown(key, self.fields, path, ctx)
            else:
                out[key] = f.node.normalize(v, join(path, key), ctx)
        for key, f in self.fields.items():
            if key in value:
                continue
            if f.required:
                ctx.add(join(path, key), "required key is missing", "missing")
            else:
                out[key] = copy.deepcopy(f.default)
        return out


class MapOf(Node):
    """Mapping with free-form keys (group names, addresses) and uniform values."""

    def __init__(self, value: Node, non_empty: bool = False):
        self.value = value
        self.non_empty = non_empty

    def normalize(self, value, path, ctx):
        if not _mapping(value, path, ctx):
            return value
        if self.non_empty and not value:
            ctx.add(path, "at least one entry is required", "value")
        return {str(k): self.value.normalize(v, join(path, k), ctx) for k, v in value.items()}


class Components(Node):
    """Mapping of component name -> body.

    The body holds binding-level keys (``binding``, e.g. ``is_loss`` or
    ``nb_step``) next to the constructor arguments of the component.
    """

    def __init__(self, categories, binding: Mapping[str, Field] | None = None,
                 accept: Callable[[Entry], Optional[str]] | None = None):
        self.categories = (categories,) if isinstance(categories, str) else tuple(categories)
        self.binding = dict(binding or {})
        self.accept = accept

    def lookup(self, name: str, ctx: Context) -> Entry:
        suggestions = []
        for cat in self.categories:
            try:
                return ctx.registry.lookup(cat, name)
            except UnknownComponent as exc:
                suggestions.append(exc.suggestion)
        close = difflib.get_close_matches(name, [s for s in suggestions if s], n=1, cutoff=0.0)
        hint = close[0] if close else None
        raise UnknownComponent(name, " or ".join(self.categories), hint)

    def normalize(self, value, path, ctx):
        if not _mapping(value, path, ctx):
            return value
        out = {}
        for name, body in value.items():
            name = str(name)
            p = join(path, name)
            body = {} if is_null(body) else body
            try:
                entry = self.lookup(name, ctx)
            except UnknownComponent as exc:
                ctx.add(p, str(exc), "component")
                out[name] = body
                continue
            if not _mapping(body, p, ctx):
                out[name] = body
                continue
            if self.accept is not None:
                msg = self.accept(entry)
                if msg:
                    ctx.add(p, msg, "component")
            bind = {k: v for k, v in body.items() if k in self.binding}
            args = {k: v for k, v in body.items() if k not in self.binding}
            nb = Section(self.binding).normalize(bind, p, ctx)
            na, problems = ctx.registry.normalize_args(entry, args, p)
            for pp, msg, kind in problems:
                ctx.add(pp, msg, kind)
            merged = dict(nb)
            merged.update(na)
            for k in args:  # keep unparseable values visible in the tree
                merged.setdefault(k, args[k])
            out[name] = merge_ordered(body, merged)
        return out


class ComponentRef(Node):
    """A component given either by bare name or as a single-entry mapping."""

    def __init__(self, category: str):
        self.category = category

    def normalize(self, value, path, ctx):
        if isinstance(value, str):
            try:
                ctx.registry.lookup(self.category, value)
            except UnknownComponent as exc:
                ctx.add(path, str(exc), "component")
            return value
        if isinstance(value, Mapping) and len(value) == 1:
            return Components(self.category).normalize(value, path, ctx)
        ctx.add(path, f"expected a {self.category} name or a single-entry mapping, got {value!r}", "type")
        return value


# ---------------------------------------------------------------- value checks


def _positive_list(value, ctx):
    if any(v <= 0 for v in value):
        return f"all entries must be positive, got {value}"
    return None


def _non_negative(value, ctx):
    return None if value >= 0 else f"must be non-negative, got {value}"


def _positive(value, ctx):
    return None if value > 0 else f"must be positive, got {value}"


def _positive_or_none(value, ctx):
    return None if value is None or value > 0 else f"must be positive, got {value}"


def _must_be_none(feature):
    def check(value, ctx):
        return None if value is None else f"{feature} is not supported; use None"
    return check


def _must_be_false(feature):
    def check(value, ctx):
        return f"{feature} is not supported; use false" if value else None
    return check


def _unit_interval_open(value, ctx):
    return None if 0.0 <= value < 1.0 else f"must lie in [0, 1), got {value}"


def _filename_spec(value, ctx):
    from ..dataio.dataset import DatasetFilenameSpec

    try:
        DatasetFilenameSpec.parse(value)
    except ValueError as exc:
        return str(exc)
    return None


_DATA_LOG = re.compile(r"^(?P<name>.+)/IMAGES/(?P<n>[0-9]+)$")


def _data_log(value, ctx):
    if value is None:
        return None
    bad = [v for v in value if not _DATA_LOG.match(v)]
    return f"entries must look like NAME/IMAGES/N, got {bad}" if bad else None


def _validation(value, ctx):
    if isinstance(value, float) and not 0.0 < value < 1.0:
        return f"a validation ratio must lie in (0, 1), got {value}"
    return None


def _output_writer(value, ctx):
    try:
        ctx.registry.lookup("OutputWriter", value)
    except UnknownComponent as exc:
        return str(exc)
    return None


def _same_as_group(value, ctx):
    parts = value.split(":")
    if len(parts) > 2 or not all(parts):
        return f"expected SRC:DEST or SRC, got {value!r}"
    return None


def _scheduler_kind(kind: str):
    def accept(entry: Entry):
        actual = getattr(entry.factory, "schedule_kind", None)
        if actual != kind:
            what = "learning-rate" if kind == "lr" else "loss-weight"
            return f"{entry.qualified} is not a {what} scheduler"
        return None
    return accept


# ---------------------------------------------------------------- building blocks

STEP = {"nb_step": Field(Scalar(int, _non_negative), 0)}
DEFAULT_WEIGHT_SCHEDULE = {"Constant": {"nb_step": 0, "value": 1.0}}


def transforms_field() -> Field:
    return Field(Nullable(Components("Transform")), None)


def groups_src_node(kind: str) -> Node:
    dest = {"transforms": transforms_field()}
    if kind != "Evaluation":
        dest["patch_transforms"] = transforms_field()
        dest["is_input"] = Field(Scalar(bool), False)
    return MapOf(Section({"groups_dest": Field(MapOf(Section(dest), non_empty=True))}), non_empty=True)


def augmentations_node() -> Node:
    block = Section({
        "data_augmentations": Field(Nullable(Components("Augmentation")), None),
        "nb": Field(Scalar(int, _non_negative), 1),
    })
    return Nullable(MapOf(block))


def patch_node() -> Node:
    return Nullable(Section({
        "patch_size": Field(Scalar(list[int], _positive_list)),
        "overlap": Field(Scalar(Union[int, list[int], None]), None),
        "extend_slice": Field(Scalar(int, _non_negative), 0),
        "pad_value": Field(Scalar(float), 0.0),
    }))


def dataset_node(kind: str) -> Section:
    fields = {
        "groups_src": Field(groups_src_node(kind)),
        "dataset_filenames": Field(Scalar(list[str], lambda v, c: next(filter(None, (_filename_spec(x, c) for x in v)), None))),
        "subset": Field(Scalar(Union[list[int], list[str], str, None]), None),
        "validation": Field(Scalar(Union[float, str, None], _validation), None),
    }
    if kind != "Evaluation":
        fields.update({
            "augmentations": Field(augmentations_node(), None),
            "Patch": Field(patch_node(), None),
            "shuffle": Field(Scalar(bool), False),
            "use_cache": Field(Scalar(bool), False),
            "batch_size": Field(Scalar(int, _positive)),
            "inline_augmentations": Field(Scalar(bool), False),
        })
    return Section(fields)


def criteria_node(kind: str) -> Node:
    if kind == "Evaluation":
        loader = Components("Metric")
    else:
        loader = Components(("Loss", "Metric"), {
            "is_loss": Field(Scalar(bool)),
            "schedulers": Field(Nullable(Components("Scheduler", STEP, _scheduler_kind("weight"))),
                                DEFAULT_WEIGHT_SCHEDULE),
        })
    targets = MapOf(Section({"criterions_loader": Field(loader)}), non_empty=True)
    return MapOf(Section({"targets_criterions": Field(targets)}))


class OptimizerSection(Node):
    """``name: AdamW`` followed by the optimizer's constructor arguments."""

    def normalize(self, value, path, ctx):
        if not _mapping(value, path, ctx):
            return value
        if "name" not in value:
            ctx.add(join(path, "name"), "required key is missing", "missing")
            return dict(value)
        name = Scalar(str).normalize(value["name"], join(path, "name"), ctx)
        try:
            entry = ctx.registry.lookup("Optimizer", name)
        except (UnknownComponent, TypeError) as exc:
            ctx.add(join(path, "name"), str(exc), "component")
            return dict(value)
        args = {k: v for k, v in value.items() if k != "name"}
        na, problems = ctx.registry.normalize_args(entry, args, path)
        for pp, msg, k in problems:
            ctx.add(pp, msg, k)
        return merge_ordered(value, {"name": name, **na})


def model_extras(kind: str) -> dict[str, Field]:
    if kind == "Train":
        return {
            "Optimizer": Field(OptimizerSection()),
            "schedulers": Field(Nullable(Components("Scheduler", STEP, _scheduler_kind("lr"))), None),
            "outputs_criterions": Field(Nullable(criteria_node("Train"))),
            "nb_batch_per_step": Field(Scalar(int, _positive), 1),
            "init_type": Field(Scalar(Literal["normal"]), "normal"),
            "init_gain": Field(Scalar(float, _positive), 0.02),
        }
    return {"outputs_criterions": Field(Scalar(Any, _must_be_none("tracking criteria during prediction")), None)}


class ModelSection(Node):
    """``classpath`` plus one body keyed by the model name."""

    def __init__(self, kind: str):
        self.kind = kind

    def normalize(self, value, path, ctx):
        if not _mapping(value, path, ctx):
            return value
        others = [k for k in value if k != "classpath"]
        entry = None
        if "classpath" in value:
            classpath = Scalar(str).normalize(value["classpath"], join(path, "classpath"), ctx)
            try:
                entry = ctx.registry.lookup("Model", classpath)
            except (UnknownComponent, TypeError) as exc:
                ctx.add(join(path, "classpath"), str(exc), "component")
                return dict(value)
            key = entry.name
        else:
            ctx.add(join(path, "classpath"), "required key is missing", "missing")
            if len(others) != 1:
                return dict(value)
            key = others[0]
            try:
                entry = ctx.registry.lookup("Model", key)
            except UnknownComponent:
                return dict(value)
        out = dict(value)
        for k in others:
            if k != key:
                _unknown(k, [key], path, ctx)
        if key not in value:
            ctx.add(join(path, key), f"required key is missing (model body for {entry.qualified})", "missing")
            return out
        out[key] = self.body(entry, value[key], join(path, key), ctx)
        return out

    def body(self, entry: Entry, value, path, ctx):
        if not _mapping(value, path, ctx):
            return value
        extras = model_extras(self.kind)
        own = {k: v for k, v in value.items() if k in extras}
        args = {k: v for k, v in value.items() if k not in extras}
        nb = Section(extras).normalize(own, path, ctx)
        na, problems = ctx.registry.normalize_args(entry, args, path)
        for pp, msg, k in problems:
            ctx.add(pp, msg, k)
        merged = dict(nb)
        merged.update(na)
        for k in args:
            merged.setdefault(k, args[k])
        return merge_ordered(value, merged)


def output_dataset_node() -> Node:
    writer = Section({
        "name_class": Field(Scalar(str, _output_writer)),
        "before_reduction_transforms": transforms_field(),
        "after_reduction_transforms": transforms_field(),
        "final_transforms": transforms_field(),
        "same_as_group": Field(Scalar(str, _same_as_group)),
        "dataset_filename": Field(Scalar(str, _filename_spec)),
        "group": Field(Scalar(str)),
        "patch_combine": Field(Scalar(Optional[Literal["Uniform", "Cosine"]]), None),
        "reduction": Field(ComponentRef("Reduction"), "Mean"),
        "inverse_transform": Field(Scalar(bool), True),
    })
    return MapOf(Section({"OutputDataset": Field(writer)}), non_empty=True)


def _common_run_fields() -> dict[str, Field]:
    return {
        "train_name": Field(Scalar(str, lambda v, c: None if v and "/" not in v and "\\" not in v else "must be a plain directory name")),
        "manual_seed": Field(Scalar(Optional[int]), None),
    }


def train_schema() -> Section:
    early = Nullable(Section({
        "monitor": Field(Scalar(Optional[str]), None),
        "patience": Field(Scalar(int, _non_negative), 10),
        "min_delta": Field(Scalar(float, _non_negative), 0.0),
        "mode": Field(Scalar(Literal["min", "max"]), "min"),
    }))
    trainer = {
        "Model": Field(ModelSection("Train")),
        "Dataset": Field(dataset_node("Train")),
        **_common_run_fields(),
        "epochs": Field(Scalar(int, _non_negative)),
        "it_validation": Field(Scalar(Optional[int], _positive_or_none), None),
        "autocast": Field(Scalar(bool, _must_be_false("autocast")), False),
        "gradient_checkpoints": Field(Scalar(Any, _must_be_none("gradient_checkpoints")), None),
        "gpu_checkpoints": Field(Scalar(Any, _must_be_none("gpu_checkpoints")), None),
        "ema_decay": Field(Scalar(float, _unit_interval_open), 0.0),
        "data_log": Field(Scalar(Optional[list[str]], _data_log), None),
        "save_checkpoint_mode": Field(Scalar(Literal["ALL", "BEST"]), "BEST"),
        "EarlyStopping": Field(early, None),
    }
    return Section({"Trainer": Field(Section(trainer))})


def prediction_schema() -> Section:
    predictor = {
        "Model": Field(ModelSection("Prediction")),
        "Dataset": Field(dataset_node("Prediction")),
        "outputs_dataset": Field(output_dataset_node()),
        "combine": Field(ComponentRef("Reduction"), "Mean"),
        **_common_run_fields(),
        "gpu_checkpoints": Field(Scalar(Any, _must_be_none("gpu_checkpoints")), None),
        "autocast": Field(Scalar(bool, _must_be_false("autocast")), False),
        "data_log": Field(Scalar(Any, _must_be_none("data_log during prediction")), None),
    }
    return Section({"Predictor": Field(Section(predictor))})


def evaluation_schema() -> Section:
    evaluator = {
        "metrics": Field(criteria_node("Evaluation")),
        "Dataset": Field(dataset_node("Evaluation")),
        "train_name": _common_run_fields()["train_name"],
    }
    return Section({"Evaluator": Field(Section(evaluator))})


KINDS = ("Train", "Prediction", "Evaluation")
ROOT_KEYS = {"Train": "Trainer", "Prediction": "Predictor", "Evaluation": "Evaluator"}
_SCHEMAS = {"Train": train_schema, "Prediction": prediction_schema, "Evaluation": evaluation_schema}


def schema_for(kind: str) -> Section:
    return _SCHEMAS[kind]()
