import pytest

from dpads.auction import Candidate
from dpads.data import AuctionRecord


@pytest.fixture
def three():
    """Server scores 0.20, 0.18, 0.05; the device score argmax is candidate b."""
    return [
        Candidate("a", 2.0, 0.10, 0.05),
        Candidate("b", 1.5, 0.12, 0.20),
        Candidate("c", 1.0, 0.05, 0.10),
    ]


@pytest.fixture
def three_record(three):
    return AuctionRecord("x", tuple(three), 0.1)


ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion and assert it."""

    def record(label: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
