import math

import numpy as np
import pytest

from trajmmd.synthetic import ManeuverModel, generate_trajectory, trial_seeds
from trajmmd.trajectory import flatten


def naive_kernel(x, y, sigma):
    """Independent Gaussian kernel: BLAS dot for the distance, libm exp."""
    d = np.asarray(x, float) - np.asarray(y, float)
    return math.exp(-float(np.dot(d, d)) / (2.0 * sigma * sigma))


def naive_mmd2(P, Q, sigma, wp=None, wq=None):
    """Squared biased MMD by explicit double loops over sample pairs."""
    m, n = len(P), len(Q)
    wp = [1.0 / m] * m if wp is None else list(wp)
    wq = [1.0 / n] * n if wq is None else list(wq)
    pp = qq = pq = 0.0
    for i in range(m):
        for j in range(m):
            pp += wp[i] * wp[j] * naive_kernel(P[i], P[j], sigma)
    for i in range(n):
        for j in range(n):
            qq += wq[i] * wq[j] * naive_kernel(Q[i], Q[j], sigma)
    for i in range(m):
        for j in range(n):
            pq += wp[i] * wq[j] * naive_kernel(P[i], Q[j], sigma)
    return pp + qq - 2.0 * pq


def naive_mmd(P, Q, sigma, wp=None, wq=None):
    return math.sqrt(max(0.0, naive_mmd2(P, Q, sigma, wp, wq)))


def features(model, n, seed, N=1100, rate=60.0):
    """``(n, 3N)`` matrix of flattened i.i.d. trajectories from ``model``."""
    return np.stack([flatten(generate_trajectory(model, N, rate, s)).values for s in trial_seeds(seed, n)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def model():
    return ManeuverModel()


_VERDICTS: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record one acceptance line: ``verdict(number, ok, detail)``."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print(f"\n{line}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
