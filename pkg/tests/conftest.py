"""Shared fixtures: bundled problems and the acceptance line collector."""

from __future__ import annotations

import numpy as np
import pytest

from nmfp.cli import load_problem_file

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[_LINES]

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return record


@pytest.fixture(scope="session")
def section4():
    return load_problem_file("section4")


@pytest.fixture(scope="session")
def example31():
    return load_problem_file("example31")


@pytest.fixture(scope="session")
def example21():
    return load_problem_file("example21")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
