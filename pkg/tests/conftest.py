import numpy as np
import pytest

from msgan import kinematics as kin


def central_difference(f, x, h=1e-5):
    """Column-stacked central differences of a vector-valued ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


@pytest.fixture
def two_link():
    return kin.PlanarChain([1.0, 1.0], [1.0, 1.0], [-np.pi, -np.pi], [np.pi, np.pi], name="two")


@pytest.fixture
def three_link():
    return kin.PlanarChain([0.7, 0.6, 0.5], [1.0, 0.8, 0.5], [-2.5] * 3, [2.5] * 3, name="three")


def random_chain(rng, n=None):
    n = n or int(rng.integers(1, 8))
    return kin.PlanarChain(
        link_lengths=rng.uniform(0.2, 1.5, n),
        link_masses=rng.uniform(0.1, 3.0, n),
        joint_lower=-np.full(n, 3.0),
        joint_upper=np.full(n, 3.0),
        base=rng.uniform(-1, 1, 2),
    )


# --- acceptance summary --------------------------------------------------

ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Store one pass/fail line; the terminal summary prints them all."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
