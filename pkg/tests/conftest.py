import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

ACCEPTANCE = pytest.StashKey[list]()

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

E2 = np.array([1e-4, 0.0, 0.0])
E3 = np.array([1e-4, 0.0, 0.0, 0.0, 0.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ec10_data():
    """Desk two-phase dataset: 200 solved 31x31 EC=10 instances."""
    from xlra import config, dataset

    t0 = time.perf_counter()
    cfg = config.load_config()
    mss, strains, Cs = dataset.build_in_memory(cfg, 200)
    return {"cfg": cfg, "mss": mss, "strains": strains, "Cs": Cs,
            "seconds": time.perf_counter() - t0}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; all lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
