import numpy as np
import pytest

from c2f import make_schedule


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sched8():
    return make_schedule(8)


@pytest.fixture
def sched1d():
    return make_schedule(4, ndim=1)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion and assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].split(".")[0])):
            terminalreporter.write_line(line)
