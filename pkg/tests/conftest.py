import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from simile import SynthConfig, synth_expert  # noqa: E402


@pytest.fixture(scope="session")
def short_traj():
    return synth_expert(SynthConfig(T=60, seed=3))


@pytest.fixture(scope="session")
def ref_traj():
    return synth_expert(SynthConfig(T=200, seed=0))


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one (criterion, line) pair per acceptance check for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
