"""Parsed configuration documents: parse, serialize, snapshot."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..errors import ConfigTypeError, SchemaError
from .registry import Registry
from .schema import KINDS, ROOT_KEYS, Context, schema_for
from .yamlio import dump_yaml, load_yaml, structurally_equal

_DEFAULT: Registry | None = None

_KIND_ALIASES = {
    "train": "Train",
    "prediction": "Prediction",
    "predict": "Prediction",
    "evaluation": "Evaluation",
    "evaluate": "Evaluation",
}


def default_registry() -> Registry:
    """Process-wide registry holding the built-ins plus any registered extensions."""
    global _DEFAULT
    if _DEFAULT is None:
        from ..builtins import register_builtins

        _DEFAULT = register_builtins(Registry())
    return _DEFAULT


def register_extension(category: str, name: str, factory, signature=None, registry: Registry | None = None):
    """Make a user component resolvable from configs exactly like a built-in.

    Must be called before a pipeline starts; raises DuplicateName when the
    (category, name) pair is taken.
    """
    return (registry or default_registry()).register(category, name, factory, signature)


def normalize_kind(kind: str) -> str:
    if kind in KINDS:
        return kind
    try:
        return _KIND_ALIASES[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown configuration kind {kind!r}; expected one of {', '.join(KINDS)}") from None


@dataclass(frozen=True, eq=False)
class ConfigDocument:
    kind: str
    root: dict
    source_path: Path | None = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfigDocument):
            return NotImplemented
        return self.kind == other.kind and structurally_equal(self.root, other.root)

    __hash__ = None  # type: ignore[assignment]

    @property
    def body(self) -> dict:
        """The mapping under the kind's root key (``Trainer``, ``Predictor``, ``Evaluator``)."""
        return self.root[ROOT_KEYS[self.kind]]

    def get(self, dotted: str, default: Any = None) -> Any:
        node: Any = self.root
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node


def validate_tree(tree: Any, kind: str, registry: Registry | None = None):
    """Normalize a loaded YAML tree; returns (normalized tree, diagnostics)."""
    ctx = Context(registry or default_registry())
    if tree is None:
        tree = {}
    normalized = schema_for(kind).normalize(tree, "", ctx)
    return normalized, ctx.diagnostics


def parse_config(text: str, kind: str, registry: Registry | None = None,
                 source_path: str | os.PathLike | None = None) -> ConfigDocument:
    kind = normalize_kind(kind)
    tree = load_yaml(text)
    normalized, diagnostics = validate_tree(tree, kind, registry)
    if diagnostics:
        if all(d.kind == "type" for d in diagnostics):
            raise ConfigTypeError(diagnostics)
        raise SchemaError(diagnostics)
    return ConfigDocument(kind, normalized, Path(source_path) if source_path else None)


def load_config(path: str | os.PathLike, kind: str, registry: Registry | None = None) -> ConfigDocument:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), kind, registry, path)


def serialize(cfg: ConfigDocument) -> str:
    return dump_yaml(cfg.root)


def snapshot(cfg: ConfigDocument, workspace, train_name: str) -> Path:
    """Write ``Setups/<train_name>/Config_<k>.yml`` with the smallest unused k."""
    root = Path(workspace) if isinstance(workspace, (str, os.PathLike)) else Path(workspace.root)
    setups = root / "Setups" / train_name
    setups.mkdir(parents=True, exist_ok=True)
    text = serialize(cfg)
    k = 0
    while True:
        path = setups / f"Config_{k}.yml"
        try:
            with open(path, "x", encoding="utf-8") as fh:  # never overwrite an earlier snapshot
                fh.write(text)
            return path
        except FileExistsError:
            k += 1
