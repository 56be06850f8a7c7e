"""Shared fixtures and the acceptance summary printed at the end of a run."""
from __future__ import annotations

import numpy as np
import pytest

from spars0.penalty import PenaltyKind, PenaltySpec

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    """Store one pass/fail line; the lines are echoed in the terminal summary."""
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["quadratic", "natural", "huber"])
def any_penalty(request):
    kind = PenaltyKind(request.param)
    return PenaltySpec(kind, 1.0, 3, huber_eps=0.1 if kind is PenaltyKind.HUBER_SHIFTED else None)


def natural(rho=1.0, n=1) -> PenaltySpec:
    return PenaltySpec(PenaltyKind.NATURAL_QUADRATIC, rho, n)
