"""Shared fixtures for the CLI and iteration tests."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pytest
from click.testing import CliRunner

from subtori.cli import main

if TYPE_CHECKING:
    from collections.abc import Callable
    from pathlib import Path

    from click.testing import Result

# 1.3 is rational, so the scan must stay below the |k| = 23 resonance
ITERATE_ARGS = [
    "iterate",
    "--scenario",
    "example-4.1-line",
    "--lambda",
    "1.3",
    "--k-scan-cap",
    "16",
    "--steps",
    "1",
]


def run_cli(*args: str) -> Result:
    """Invoke the ``subtori`` group in-process."""
    return CliRunner().invoke(main, list(args))


@pytest.fixture
def cli() -> Callable[..., Result]:
    return run_cli


@pytest.fixture(scope="module")
def iteration_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Output directory of one finished ``iterate`` run."""
    out = tmp_path_factory.mktemp("iterate")
    result = run_cli(*ITERATE_ARGS, "--out", str(out), "--json")
    assert result.exit_code == 0, result.output
    return out
