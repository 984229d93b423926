from __future__ import annotations

import shutil
import time
from pathlib import Path

import pytest

from medpipe.cli import main
from medpipe.synthetic import make_dataset

FIXTURES = Path(__file__).parent / "fixtures"
E2E = FIXTURES / "e2e"


def read_fixture(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def run_chain(root: Path, seed: int | None = None) -> dict:
    """Synthetic dataset, then train -> predict -> evaluate through the CLI."""
    root.mkdir(parents=True, exist_ok=True)
    make_dataset(root)
    for name in ("Config.yml", "Prediction.yml", "Evaluation.yml"):
        shutil.copyfile(E2E / name, root / name)
    extra = ["--seed", str(seed)] if seed is not None else []
    timings, codes = {}, {}
    for command, cfg in (("train", "Config.yml"), ("predict", "Prediction.yml"), ("evaluate", "Evaluation.yml")):
        start = time.perf_counter()
        codes[command] = main([command, "--config", str(root / cfg), "--workspace", str(root), *extra])
        timings[command] = time.perf_counter() - start
    return {"root": root, "codes": codes, "timings": timings}


@pytest.fixture(scope="session")
def chain(tmp_path_factory) -> dict:
    return run_chain(tmp_path_factory.mktemp("run_a") / "Workspace")


@pytest.fixture(scope="session")
def chain_repeat(tmp_path_factory) -> dict:
    return run_chain(tmp_path_factory.mktemp("run_b") / "Workspace")


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
