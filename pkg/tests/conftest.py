import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fedsim import data

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def central_differences(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite-difference gradient of a scalar function; the independent oracle."""
    g = np.zeros_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Largest |a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from dominating."""
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


@pytest.fixture(scope="session")
def blobs():
    """Small synthetic benchmark: 10 classes, 8 features, 600 train / 120 test samples."""
    full = data.synth_generate(10, 72, 8, seed=3)
    return data.train_test_split(full, 1 / 6, seed=3)


# Acceptance verdicts, collected by tests/test_acceptance.py and echoed after the run.
VERDICTS: dict[int, str] = {}


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    VERDICTS[number] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[number])
