import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def low_rank_panel(rng, N, T, r, noise=0.0):
    L = rng.standard_normal((N, r)) * np.sqrt(N)
    F = rng.standard_normal((T, r))
    return L, F, L @ F.T + noise * rng.standard_normal((N, T))


# Acceptance lines are collected here and echoed in the terminal summary so
# they show up in a plain ``pytest -v`` log without ``-s``.
_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
