from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from tridiag_resolvent.operator_model import (
    build_operator,
    chebyshev_spec,
    period_two_spec,
    perturbed_chebyshev_spec,
)

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

REPO = TESTS.parent
CONFIGS = REPO / "configs"


@pytest.fixture(scope="session")
def frozen() -> dict:
    return json.loads((TESTS / "data" / "frozen_oracles.json").read_text())


@pytest.fixture(scope="session")
def chebyshev():
    return build_operator(chebyshev_spec())


@pytest.fixture(scope="session")
def perturbed():
    return build_operator(perturbed_chebyshev_spec(5.0))


@pytest.fixture(scope="session")
def period_two():
    return build_operator(period_two_spec())


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if outcome == "passed" and rep.when != "call":
                continue
            name = nodeid.split("::")[-1]
            lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, verdict in sorted(set(lines)):
            number = int(name.split("_")[2])
            terminalreporter.write_line(f"criterion {number:2d}  {verdict}  {name}")
