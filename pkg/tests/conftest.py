import pytest

from liftsim.traffic import TrafficProfile, TrafficRecord, generate_day

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record a one-line verdict for the acceptance summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sample_rows():
    return [TrafficRecord(27000.0, 1, 2, 77.9),
            TrafficRecord(27042.9, 1, 7, 78.3),
            TrafficRecord(60754.1, 8, 1, 101.6)]


@pytest.fixture(scope="session")
def small_tape():
    return generate_day(TrafficProfile(workers=5, seed=11))


@pytest.fixture(scope="session")
def tape50():
    """50 hall calls from a 13-worker day."""
    return generate_day(TrafficProfile(workers=13, seed=5))[:50]
