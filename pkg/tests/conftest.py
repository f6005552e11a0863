import itertools
import os
import subprocess
import sys

import numpy as np
import pytest


def fd_grad(f, y, h=1e-6):
    """Central differences of a scalar function of a vector."""
    y = np.asarray(y, dtype=np.float64)
    g = np.empty_like(y)
    for i in range(y.size):
        e = np.zeros_like(y)
        e.flat[i] = h
        g.flat[i] = (f(y + e) - f(y - e)) / (2 * h)
    return g


def fd_cotangent(solve, C, g, h=1e-5):
    """``d (g . solve(C)) / dC`` by perturb-and-resolve."""
    out = np.zeros_like(C)
    for idx in np.ndindex(*C.shape):
        E = np.zeros_like(C)
        E[idx] = h
        out[idx] = (g @ solve(C + E) - g @ solve(C - E)) / (2 * h)
    return out


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8))


def all_perms(v):
    return np.array([np.asarray(v)[list(p)] for p in itertools.permutations(range(len(v)))])


def run_without_numba(code, timeout=600):
    """Run ``code`` in a fresh interpreter with the numpy fallback selected."""
    env = dict(os.environ, OWAPTO_DISABLE_NUMBA="1")
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                          text=True, timeout=timeout)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one (criterion, ok, detail) line per acceptance criterion, printed at the end
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {num:2d} ({name}): {detail}")
