"""YAML loading and dumping with the conventions used by config files.

* a bare ``None`` token is null (quoted ``'None'`` stays a string);
* exponent-only floats such as ``1e-06`` load as floats;
* mapping order is kept in both directions;
* short scalar lists are written in flow style (``[1, 16, 16]``).
"""

from __future__ import annotations

import re
from typing import Any

import yaml

from ..errors import ConfigSyntaxError

_NULL = re.compile(r"^(?:None)$")
_EXP_FLOAT = re.compile(r"^[-+]?[0-9]+[eE][-+]?[0-9]+$")


class Loader(yaml.SafeLoader):
    pass


class Dumper(yaml.SafeDumper):
    pass


for _cls in (Loader, Dumper):
    _cls.add_implicit_resolver("tag:yaml.org,2002:null", _NULL, ["N"])
    _cls.add_implicit_resolver("tag:yaml.org,2002:float", _EXP_FLOAT, list("-+0123456789"))


def _represent_none(dumper, _):
    return dumper.represent_scalar("tag:yaml.org,2002:null", "None")


def _represent_list(dumper, data):
    flow = len(data) > 0 and all(isinstance(v, (int, float, str, bool)) or v is None for v in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


Dumper.add_representer(type(None), _represent_none)
Dumper.add_representer(list, _represent_list)
Dumper.add_representer(tuple, _represent_list)


def load_yaml(text: str) -> Any:
    try:
        return yaml.load(text, Loader=Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise ConfigSyntaxError(exc.problem or str(exc), line, column) from None
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(str(exc)) from None


def dump_yaml(data: Any) -> str:
    return yaml.dump(data, Dumper=Dumper, sort_keys=False, default_flow_style=False,
                     allow_unicode=True, width=1000)


def structurally_equal(a: Any, b: Any) -> bool:
    """Deep equality that also compares mapping key order and scalar types."""
    if isinstance(a, dict) and isinstance(b, dict):
        return list(a.keys()) == list(b.keys()) and all(structurally_equal(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(structurally_equal(x, y) for x, y in zip(a, b))
    return type(a) is type(b) and a == b
