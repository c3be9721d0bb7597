"""
Pytest configuration for integration tests.

Every test writes its outputs into its own temporary directory.
"""

import pytest

from augmanifold.cli import main


@pytest.fixture
def output_dir(tmp_path):
    """Directory the CLI writes into."""
    return tmp_path / "out"


@pytest.fixture
def run_cli(output_dir):
    """Run a command with the output directory redirected; returns the exit code."""

    def run(command: str, *args: str, overrides: list[str] | None = None) -> int:
        argv = [command, *args, "--set", f"output.directory={output_dir}"]
        for override in overrides or []:
            argv += ["--set", override]
        return main(argv)

    return run
