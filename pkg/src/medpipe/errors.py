"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations

from dataclasses import dataclass


class MedpipeError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class Diagnostic:
    """One problem found in a configuration document, addressed by dotted key path."""

    path: str
    message: str
    kind: str = "schema"

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ConfigError(MedpipeError):
    """A configuration could not be turned into a valid document."""


class ConfigSyntaxError(ConfigError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"YAML syntax error{where}: {message}")


class SchemaError(ConfigError):
    """Carries every diagnostic collected during validation."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        lines = "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(f"{len(self.diagnostics)} configuration error(s):\n{lines}")

    @property
    def paths(self) -> list[str]:
        return [d.path for d in self.diagnostics]


class ConfigTypeError(SchemaError):
    """Raised when every diagnostic is a scalar type mismatch."""


class UnknownComponent(ConfigError):
    def __init__(self, name: str, category: str, suggestion: str | None = None):
        self.name = name
        self.category = category
        self.suggestion = suggestion
        hint = f"; did you mean '{suggestion}'?" if suggestion else ""
        super().__init__(f"unknown {category} component '{name}'{hint}")


class ArgumentError(ConfigError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class DuplicateName(MedpipeError):
    pass


class RegistryFrozen(MedpipeError):
    pass


# ---------------------------------------------------------------- tensors


class ShapeError(MedpipeError, ValueError):
    pass


class GraphError(MedpipeError):
    pass


# ---------------------------------------------------------------- data


class FormatError(MedpipeError):
    pass


class UnsupportedElementType(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class MissingGroup(MedpipeError):
    def __init__(self, case: str, group: str):
        self.case = case
        self.group = group
        super().__init__(f"case '{case}' has no file for group '{group}'")


class EmptyDataset(MedpipeError):
    pass


class CaseMismatch(MedpipeError):
    def __init__(self, case: str, detail: str = ""):
        self.case = case
        super().__init__(f"case '{case}' is not present in every dataset source{detail}")


# ---------------------------------------------------------------- transforms / patches


class DegenerateRange(MedpipeError, ValueError):
    pass


class InvalidDim(MedpipeError, ValueError):
    pass


class MissingState(MedpipeError):
    pass


class InvalidOverlap(MedpipeError, ValueError):
    pass


class UncoveredVoxel(MedpipeError):
    pass


# ---------------------------------------------------------------- model / training


class SpecError(MedpipeError, ValueError):
    pass


class Unsupported(SpecError):
    pass


class UnresolvedAddress(MedpipeError, KeyError):
    def __init__(self, address: str, suggestion: str | None = None):
        self.address = address
        self.suggestion = suggestion
        hint = f"; did you mean '{suggestion}'?" if suggestion else ""
        super().__init__(f"unresolved address '{address}'{hint}")

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return self.args[0]


class MissingTarget(MedpipeError):
    pass


class NonFiniteLoss(MedpipeError, FloatingPointError):
    def __init__(self, step: int, name: str = "total"):
        self.step = step
        super().__init__(f"non-finite loss '{name}' at step {step}")


class LabelOutOfRange(MedpipeError, ValueError):
    pass


class CheckpointLoadError(MedpipeError):
    pass


class EmptyReduction(MedpipeError, ValueError):
    pass


class EmptySequence(MedpipeError, ValueError):
    pass


class WorkspaceBusy(MedpipeError):
    pass
