import numpy as np
import pytest

from arwlab.stabilizer import StabilizationOutcome


def assert_conserved(outcome: StabilizationOutcome):
    """Particles in = particles out + killed, and the instruction ledger adds up."""
    assert outcome.initial_particles == outcome.final.total_particles + outcome.exits
    assert outcome.final.total_particles == int(np.count_nonzero(outcome.final.states))
    assert outcome.moves + outcome.sleeps + outcome.sleep_noops == outcome.instructions_total
    assert outcome.instructions_total == int(outcome.odometer.sum())
    assert outcome.final.is_stable()


@pytest.fixture
def conserved():
    return assert_conserved


_acceptance_lines: list[str] = []


@pytest.fixture
def report(capsys):
    """Record one acceptance verdict line; echoed again in the terminal summary."""
    def emit(number: int, ok: bool, text: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}"
        _acceptance_lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
