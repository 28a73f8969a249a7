"""Shared fixtures and the acceptance summary printed after the run."""

from __future__ import annotations

import numpy as np
import pytest

from hyperpot.models import WrmParams
from hyperpot.sampling import MarkedConfiguration

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES[number] = f"[acceptance {number:2d}] {status}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def twrm_params():
    return WrmParams(2.0, 1.0, 0.5, 1.0)


def marked(points, marks) -> MarkedConfiguration:
    pts = np.asarray(points, dtype=float)
    return MarkedConfiguration(pts, marks, dim=pts.shape[1] if pts.ndim == 2 else None)
