import pytest

from kreinlab.experiments import ExperimentConfig, run_experiment

ACCEPTANCE_LINES = []


class _DefaultRuns:
    """Runs each experiment at the default configuration at most once per session."""

    def __init__(self):
        self._cache = {}

    def __call__(self, kind):
        if kind not in self._cache:
            rep = run_experiment(ExperimentConfig(name=kind))
            if rep.error:
                pytest.fail(f"{kind} experiment raised: {rep.error}")
            self._cache[kind] = rep
        return self._cache[kind]


@pytest.fixture(scope="session")
def default_run():
    return _DefaultRuns()


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion."""

    def record(number, title, ok, detail):
        ACCEPTANCE_LINES.append((number, title, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
