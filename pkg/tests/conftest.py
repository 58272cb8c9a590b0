"""Shared fixtures: the default 38-trial dataset is generated once per
session (through the command-line entry point, so the CLI path is the one
exercised) and reused by every test that needs real data."""

from pathlib import Path

import pytest

from ortwin.cli import main as cli_main


@pytest.fixture(scope="session")
def default_dataset(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("dataset") / "default"
    rc = cli_main(["simulate", "--out", str(out)])
    assert rc == 0, "default-dataset generation failed"
    return out
