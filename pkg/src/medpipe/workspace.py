"""Experiment workspace layout and the single-writer lock."""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass
from pathlib import Path

from filelock import FileLock, Timeout

from .errors import WorkspaceBusy

LOCK_NAME = ".medpipe.lock"


@dataclass(frozen=True)
class Workspace:
    """Derived artifact directories for one experiment (``train_name``)."""

    root: Path
    train_name: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", Path(self.root))
        if not self.train_name or os.sep in self.train_name or "/" in self.train_name:
            raise ValueError(f"train_name must be a plain directory name, got {self.train_name!r}")

    @property
    def checkpoints(self) -> Path:
        return self.root / "Checkpoints" / self.train_name

    @property
    def setups(self) -> Path:
        return self.root / "Setups" / self.train_name

    @property
    def statistics(self) -> Path:
        return self.root / "Statistics" / self.train_name

    @property
    def predictions(self) -> Path:
        return self.root / "Predictions" / self.train_name

    @property
    def prediction_dataset(self) -> Path:
        return self.predictions / "Dataset"

    @property
    def evaluations(self) -> Path:
        return self.root / "Evaluations" / self.train_name

    def ensure(self, path: Path) -> Path:
        path.mkdir(parents=True, exist_ok=True)
        return path

    def lock(self) -> "WorkspaceLock":
        return WorkspaceLock(self.root)


class WorkspaceLock:
    """Non-blocking exclusive lock on the workspace root."""

    def __init__(self, root: Path):
        Path(root).mkdir(parents=True, exist_ok=True)
        self.path = Path(root) / LOCK_NAME
        self._lock = FileLock(str(self.path), timeout=0)

    def __enter__(self) -> "WorkspaceLock":
        try:
            self._lock.acquire()
        except Timeout:
            raise WorkspaceBusy(f"another command holds the workspace lock {self.path}") from None
        return self

    def __exit__(self, *exc) -> None:
        self._lock.release()


class RunLog:
    """Appends plain lines to a ``log.txt``; optionally echoes them."""

    def __init__(self, path: Path, echo: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.echo = echo
        self._fh = open(self.path, "a", encoding="utf-8")

    def __call__(self, line: str) -> None:
        self._fh.write(line + "\n")
        self._fh.flush()
        if self.echo:
            print(line)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "RunLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def copy_config(source: Path | None, text: str, dest: Path) -> Path:
    """Place the run's config beside its artifacts (the original file when known)."""
    dest.parent.mkdir(parents=True, exist_ok=True)
    if source is not None and Path(source).is_file():
        if Path(source).resolve() != dest.resolve():
            shutil.copyfile(source, dest)
    else:
        dest.write_text(text, encoding="utf-8")
    return dest
