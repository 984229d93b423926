"""Configuration documents, schemas and the component registry."""

from .build import build_model, criterion_bindings
from .document import (
    ConfigDocument,
    default_registry,
    load_config,
    parse_config,
    register_extension,
    serialize,
    snapshot,
)
from .registry import CATEGORIES, ComponentSpec, Registry, resolve_component
from .validate import validate_cross_refs
from .yamlio import dump_yaml, load_yaml, structurally_equal

__all__ = [
    "CATEGORIES",
    "ComponentSpec",
    "ConfigDocument",
    "Registry",
    "build_model",
    "criterion_bindings",
    "default_registry",
    "dump_yaml",
    "load_config",
    "load_yaml",
    "parse_config",
    "register_extension",
    "resolve_component",
    "serialize",
    "snapshot",
    "structurally_equal",
    "validate_cross_refs",
]
