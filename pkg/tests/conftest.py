import numpy as np
import pytest

from habitflow.series import ParticipantSeries


def make_series(behavior, reminder=None, lab=None, surveys=(), pid="p1", rate=0.0, first_day=1):
    behavior = np.asarray(behavior, dtype=float)
    n = behavior.size
    days = np.arange(first_day, first_day + n)
    reminder = np.zeros(n, dtype=int) if reminder is None else np.asarray(reminder)
    lab = np.zeros(n, dtype=int) if lab is None else np.asarray(lab)
    return ParticipantSeries(pid, days, behavior, reminder, lab, tuple(surveys), rate)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cohort():
    from habitflow.simulator import SimCohortSpec, simulate_cohort

    return simulate_cohort(SimCohortSpec(n_participants=20, n_days=14, survey_days=(0, 7, 14), seed=7))




# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
