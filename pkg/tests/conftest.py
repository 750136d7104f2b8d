from __future__ import annotations

import pytest

from skewrat.checks import CORPORA
from skewrat.mcf import DigitSequence


@pytest.fixture(params=sorted(CORPORA))
def corpus(request) -> DigitSequence:
    return CORPORA[request.param]


@pytest.fixture
def tail3() -> DigitSequence:
    return DigitSequence((), (3,))


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
