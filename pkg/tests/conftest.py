import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from floesim.floes import Domain, FloeField

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_field(position, radius, thickness=1.0, velocity=None, omega=None, side=50_000.0):
    radius = np.atleast_1d(np.asarray(radius, dtype=float))
    n = len(radius)
    thickness = np.broadcast_to(np.asarray(thickness, dtype=float), (n,))
    return FloeField(Domain(side), np.arange(1, n + 1), radius, thickness,
                     np.asarray(position, dtype=float).reshape(n, 2), velocity=velocity, omega=omega)


def random_field(rng, n=50, side=50_000.0, r_range=(800.0, 3000.0), spread=1.0):
    """Floes placed without relaxation, so contacts are plentiful."""
    radius = np.sort(rng.uniform(*r_range, n))[::-1]
    return make_field(rng.random((n, 2)) * side, radius, rng.uniform(0.2, 3.0, n),
                      velocity=rng.normal(0, 0.1 * spread, (n, 2)),
                      omega=rng.normal(0, 1e-5 * spread, n), side=side)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


class CriterionRecorder:
    def __init__(self, config, number, title):
        self.config, self.number, self.title = config, number, title
        self.recorded = False

    def __call__(self, ok: bool, detail: str):
        self.recorded = True
        line = f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'}  {self.title}: {detail}"
        self.config.stash.setdefault(_ACCEPTANCE, []).append((self.number, line))
        print(line)
        assert ok, line


@pytest.fixture
def criterion(request):
    """``criterion(ok, detail)`` records one PASS/FAIL line and asserts ``ok``."""
    marker = request.node.get_closest_marker("criterion")
    rec = CriterionRecorder(request.config, *marker.args)
    yield rec
    if not rec.recorded:
        line = f"criterion {rec.number:>2} FAIL  {rec.title}: did not complete"
        request.config.stash.setdefault(_ACCEPTANCE, []).append((rec.number, line))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
