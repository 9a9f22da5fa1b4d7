from __future__ import annotations

import math

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# (|kappa|, theta, phi) triples used throughout the variance campaigns
REFERENCE_TRIPLES = (
    (3.0, math.pi / 5, math.pi / 4),
    (4.0, math.pi / 4, math.pi / 3),
    (5.0, math.pi / 3, math.pi / 5),
)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record and print the one-line verdict of an acceptance criterion."""

    def report(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"CRITERION {number} {'PASS' if passed else 'FAIL'} | {title} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
