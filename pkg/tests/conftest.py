import pytest

from rpveh.harvester import PPA4011
from rpveh.interface import TABLE1
from rpveh.transient import AccelProfile, SimConfig, simulate_switched

SWITCHED_AMPLITUDES = (0.75, 1.0, 1.25)


@pytest.fixture(scope="session")
def h():
    return PPA4011


@pytest.fixture(scope="session")
def switched_runs():
    """Constant-amplitude switched runs with the reference controller, shared by several tests."""
    cfg = SimConfig(dt=0.25e-6, fidelity="switched", record_decimation=200)
    return {
        a: simulate_switched(PPA4011, TABLE1, AccelProfile.constant(a, 0.4, PPA4011.f_res), cfg)
        for a in SWITCHED_AMPLITUDES
    }


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion and return the verdict."""

    def _report(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return _report


@pytest.fixture
def note():
    def _note(text: str) -> None:
        line = f"[INFO] {text}"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return _note


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
