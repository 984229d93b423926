"""Component registry: (category, name) -> factory with a declared signature.

Names may be namespaced as ``Namespace:Name`` (``CustomLoss:FocalLoss``).
Argument values coming from YAML are checked against the factory's
parameters and coerced to the annotated types.
"""

from __future__ import annotations

import dataclasses
import difflib
import inspect
import typing
from dataclasses import dataclass
from typing import Any, Callable, Literal, Mapping, Union

from ..errors import ArgumentError, DuplicateName, RegistryFrozen, UnknownComponent

CATEGORIES = (
    "Model",
    "Optimizer",
    "Loss",
    "Metric",
    "Transform",
    "Augmentation",
    "Scheduler",
    "OutputWriter",
    "Reduction",
)

class _Required:
    def __repr__(self) -> str:
        return "REQUIRED"


REQUIRED = _Required()


@dataclass(frozen=True)
class Param:
    name: str
    annotation: Any = Any
    default: Any = REQUIRED

    @property
    def required(self) -> bool:
        return self.default is REQUIRED


@dataclass(frozen=True)
class Entry:
    category: str
    namespace: str | None
    name: str
    factory: Callable
    params: tuple[Param, ...]

    @property
    def qualified(self) -> str:
        return f"{self.namespace}:{self.name}" if self.namespace else self.name

    def param(self, name: str) -> Param | None:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class ComponentSpec:
    """A component reference as written in a config: name plus ordered args."""

    name: str
    args: Mapping[str, Any] = dataclasses.field(default_factory=dict)


def split_name(name: str) -> tuple[str | None, str]:
    if ":" in name:
        ns, _, base = name.rpartition(":")
        return ns, base
    return None, name


def signature_of(factory: Callable) -> tuple[Param, ...]:
    target = factory.__init__ if inspect.isclass(factory) else factory
    try:
        hints = typing.get_type_hints(target)
    except Exception:  # unresolvable forward refs; fall back to raw annotations
        hints = {}
    params = []
    for p in inspect.signature(factory).parameters.values():
        if p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD):
            continue
        ann = hints.get(p.name, p.annotation)
        ann = Any if ann is inspect.Parameter.empty else ann
        default = REQUIRED if p.default is inspect.Parameter.empty else p.default
        params.append(Param(p.name, ann, default))
    return tuple(params)


# ---------------------------------------------------------------- coercion


class CoercionError(ValueError):
    pass


def _type_name(ann) -> str:
    origin = typing.get_origin(ann)
    if origin is Literal:
        return " | ".join(repr(a) for a in typing.get_args(ann))
    if origin in (list, tuple, typing.Sequence):
        args = typing.get_args(ann)
        return f"list of {_type_name(args[0])}" if args else "list"
    if origin is Union or (hasattr(typing, "UnionType") and origin is getattr(__import__("types"), "UnionType", None)):
        return " or ".join("None" if a is type(None) else _type_name(a) for a in typing.get_args(ann))
    return getattr(ann, "__name__", str(ann))


def is_null(value) -> bool:
    return value is None or (isinstance(value, str) and value == "None")


def coerce(value, ann):
    """Return ``value`` converted to ``ann`` or raise CoercionError.

    Dataclass annotations accept a mapping and return a plain dict with every
    field filled; :func:`build_value` turns it into the dataclass later.
    """
    if ann is Any:
        return None if is_null(value) else value
    origin = typing.get_origin(ann)
    args = typing.get_args(ann)

    if origin is Union or type(ann).__name__ == "UnionType":
        if is_null(value) and type(None) in args:
            return None
        errors = []
        for option in args:
            if option is type(None):
                continue
            try:
                return coerce(value, option)
            except CoercionError as exc:
                errors.append(str(exc))
        raise CoercionError(f"expected {_type_name(ann)}, got {value!r}")
    if origin is Literal:
        if value in args:
            return value
        raise CoercionError(f"expected one of {', '.join(map(str, args))}, got {value!r}")
    if origin in (list, tuple) or ann in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise CoercionError(f"expected {_type_name(ann)}, got {value!r}")
        inner = args[0] if args else Any
        return [coerce(v, inner) for v in value]
    if origin in (dict, Mapping) or ann in (dict,):
        if not isinstance(value, Mapping):
            raise CoercionError(f"expected a mapping, got {value!r}")
        return dict(value)
    if dataclasses.is_dataclass(ann):
        if is_null(value):
            value = {}
        if not isinstance(value, Mapping):
            raise CoercionError(f"expected a mapping for {ann.__name__}, got {value!r}")
        hints = typing.get_type_hints(ann)
        names = [f.name for f in dataclasses.fields(ann)]
        extra = [k for k in value if k not in names]
        if extra:
            raise CoercionError(f"unexpected key(s) {extra} for {ann.__name__}")
        out = {}
        for f in dataclasses.fields(ann):
            if f.name in value:
                out[f.name] = coerce(value[f.name], hints[f.name])
            elif f.default is not dataclasses.MISSING:
                out[f.name] = f.default
            elif f.default_factory is not dataclasses.MISSING:
                out[f.name] = f.default_factory()
            else:
                raise CoercionError(f"missing key '{f.name}' for {ann.__name__}")
        return out
    if is_null(value):
        raise CoercionError(f"expected {_type_name(ann)}, got None")
    if ann is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise CoercionError(f"expected bool, got {value!r}")
    if ann is int:
        if isinstance(value, bool):
            raise CoercionError(f"expected int, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
        raise CoercionError(f"expected int, got {value!r}")
    if ann is float:
        if isinstance(value, bool):
            raise CoercionError(f"expected float, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise CoercionError(f"expected float, got {value!r}")
    if ann is str:
        if isinstance(value, str):
            return value
        raise CoercionError(f"expected str, got {value!r}")
    if isinstance(ann, type) and isinstance(value, ann):
        return value
    raise CoercionError(f"expected {_type_name(ann)}, got {value!r}")


def build_value(value, ann):
    """Instantiate dataclass-typed values produced by :func:`coerce`."""
    if dataclasses.is_dataclass(ann) and isinstance(value, Mapping):
        hints = typing.get_type_hints(ann)
        return ann(**{k: build_value(v, hints[k]) for k, v in value.items()})
    return value


# ---------------------------------------------------------------- registry


class Registry:
    def __init__(self) -> None:
        self._entries: dict[tuple[str, str | None, str], Entry] = {}
        self._aliases: dict[tuple[str, str], tuple[str, str | None, str]] = {}
        self._frozen = False

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> None:
        self._frozen = True

    def copy(self) -> "Registry":
        new = Registry()
        new._entries = dict(self._entries)
        new._aliases = dict(self._aliases)
        return new

    def register(self, category: str, name: str, factory: Callable,
                 signature: Mapping[str, tuple[Any, Any]] | None = None, aliases=()) -> Entry:
        """Add a component.  ``signature`` maps parameter -> (type, default) when
        the factory's own signature should not be used; use ``REQUIRED`` as the
        default of mandatory parameters."""
        if self._frozen:
            raise RegistryFrozen("the registry is frozen once a pipeline has started")
        if category not in CATEGORIES:
            raise ValueError(f"unknown category '{category}'; expected one of {', '.join(CATEGORIES)}")
        ns, base = split_name(name)
        key = (category, ns, base)
        if key in self._entries:
            raise DuplicateName(f"{category} '{name}' is already registered")
        if signature is None:
            params = signature_of(factory)
        else:
            params = tuple(Param(k, t, d) for k, (t, d) in signature.items())
        entry = Entry(category, ns, base, factory, params)
        self._entries[key] = entry
        for alias in aliases:
            self._aliases[(category, alias)] = key
        return entry

    def names(self, category: str) -> list[str]:
        return sorted(e.qualified for (cat, _, _), e in self._entries.items() if cat == category)

    def __contains__(self, item: tuple[str, str]) -> bool:
        try:
            self.lookup(*item)
        except UnknownComponent:
            return False
        return True

    def lookup(self, category: str, name: str) -> Entry:
        key = self._aliases.get((category, name))
        if key is None:
            ns, base = split_name(name)
            key = (category, ns, base)
        entry = self._entries.get(key)
        if entry is None:
            candidates = self.names(category) + [a for (c, a) in self._aliases if c == category]
            close = difflib.get_close_matches(name, candidates, n=1, cutoff=0.6)
            raise UnknownComponent(name, category, close[0] if close else None)
        return entry

    def normalize_args(self, entry: Entry, args: Mapping[str, Any] | None, path: str) -> tuple[dict, list[tuple[str, str, str]]]:
        """Check and coerce ``args``; returns (normalized args, problems).

        Problems are (path, message, kind) triples.  Missing optional
        arguments are filled with their defaults so the result records the
        complete constructor call.
        """
        args = dict(args or {})
        problems = []
        out = {}
        for key in args:
            if entry.param(key) is None:
                close = difflib.get_close_matches(key, [p.name for p in entry.params], n=1)
                hint = f"; did you mean '{close[0]}'?" if close else ""
                problems.append((f"{path}.{key}", f"unexpected argument for {entry.qualified}{hint}", "unknown"))
        for p in entry.params:
            if p.name in args:
                try:
                    out[p.name] = coerce(args[p.name], p.annotation)
                except CoercionError as exc:
                    problems.append((f"{path}.{p.name}", str(exc), "type"))
            elif p.required:
                problems.append((f"{path}.{p.name}", f"required argument of {entry.qualified} is missing", "missing"))
            else:
                default = p.default
                if dataclasses.is_dataclass(default) and not isinstance(default, type):
                    default = dataclasses.asdict(default)
                elif isinstance(default, tuple):
                    default = list(default)
                out[p.name] = default
        return out, problems

    def build(self, category: str, name: str, args: Mapping[str, Any] | None = None, path: str | None = None):
        entry = self.lookup(category, name)
        path = path or name
        normalized, problems = self.normalize_args(entry, args, path)
        if problems:
            p, msg, _ = problems[0]
            raise ArgumentError(p, msg)
        kwargs = {p.name: build_value(normalized[p.name], p.annotation) for p in entry.params if p.name in normalized}
        return entry.factory(**kwargs)


def resolve_component(spec: ComponentSpec, category: str, registry: Registry):
    """Construct the component named by ``spec`` with exactly its declared args."""
    return registry.build(category, spec.name, spec.args)
