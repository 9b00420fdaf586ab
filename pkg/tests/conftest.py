import numpy as np
import pytest

from moirekit.simulate import ScenarioSpec, render_sequence


@pytest.fixture(scope="session")
def short_authentic():
    """A 40-frame camera-moving sequence with 2 degree jitter."""
    spec = ScenarioSpec(distance_z=1200.0, n_frames=40, rotation_jitter_deg=2.0, seed=11)
    frames, manifest = render_sequence(spec)
    return spec, frames, manifest


@pytest.fixture(scope="session")
def short_sweep():
    spec = ScenarioSpec(distance_z=1300.0, n_frames=60, rotation_jitter_deg=1.0, seed=12, path="sweep",
                        start_offset=(250.0, 0.0), end_offset=(-250.0, 0.0), sweep_cycles=1.5)
    frames, manifest = render_sequence(spec)
    return spec, frames, manifest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_LINES].append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
