import numpy as np
import pytest
from hypothesis import settings

from lognokit.ingest import SensorLog, SessionMeta
from lognokit.siglognormal import LognormalComponent3D, SigmaLognormalModel

# timing varies a lot on shared machines
settings.register_profile("lognokit", deadline=None)
settings.load_profile("lognokit")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_log(t, acc=None, euler=None, meta=None, rate_hz=100.0):
    t = np.asarray(t, dtype=float)
    n = t.size
    acc = np.zeros((n, 3)) if acc is None else np.asarray(acc, dtype=float)
    euler = np.zeros((n, 3)) if euler is None else np.asarray(euler, dtype=float)
    return SensorLog(t=t, acc=acc, gyro=np.zeros((n, 3)), mag=np.zeros((n, 3)), euler=euler,
                     rate_hz=rate_hz, meta=meta or SessionMeta())


def separated_model(rng, n_components, gap=0.5):
    """Strokes with onsets ``gap`` seconds apart and random directions."""
    comps = []
    for i in range(n_components):
        comps.append(LognormalComponent3D(
            D=rng.uniform(0.1, 0.3), t0=0.05 + i * gap + rng.uniform(0, 0.05),
            mu=rng.uniform(-1.5, -1.0), sigma=rng.uniform(0.2, 0.3),
            theta_s=rng.uniform(-3, 3), theta_e=rng.uniform(-3, 3),
            phi_s=rng.uniform(-0.5, 0.5), phi_e=rng.uniform(-0.5, 0.5)).normalized())
    return SigmaLognormalModel(tuple(comps))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
