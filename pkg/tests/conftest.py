import os
import time

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def _run(indicator):
    from surfafem.afem import afem_run, experiment_config

    t0 = time.perf_counter()
    records, mesh = afem_run(experiment_config("half_sphere", indicator=indicator), "half_sphere")
    return records, mesh, time.perf_counter() - t0


@pytest.fixture(scope="session")
def half_sphere_mu():
    """mu-driven half-sphere run to the final tolerance: ``(records, final mesh, seconds)``."""
    return _run("mu")


@pytest.fixture(scope="session")
def half_sphere_lambda():
    return _run("lambda")


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one acceptance verdict line; all lines are repeated in the terminal summary."""

    def emit(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
