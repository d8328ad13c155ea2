import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from neckflow.detection import default_params
from neckflow.flow import FlowConfig, run_until_event
from neckflow.history import FlowHistory, FlowState
from neckflow.normal import build_normal_neck
from neckflow.profile import dumbbell_profile
from neckflow.synthetic import harmonic_graph

settings.register_profile("neckflow", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("neckflow")

ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one summary line per acceptance criterion, then assert it."""
    def record(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_neck():
    """A normal neck on a small Y20 perturbation at level 3, heights [0, 3]."""
    return build_normal_neck(harmonic_graph(1e-3, level=3, n_heights=31, a=0.0, b=3.0))


@pytest.fixture(scope="session")
def dumbbell_detection():
    """Dumbbell flowed up to its first certified neck: (event, history, params)."""
    prof = dumbbell_profile()
    params = default_params(prof)
    hist = FlowHistory(FlowConfig().snapshot_capacity)
    ev = run_until_event(FlowState(prof), hist, params, FlowConfig())
    assert ev.kind == "NeckDetected"
    return ev, hist, params
