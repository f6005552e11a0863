"""Compiled kernels against their numpy fallbacks."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from owapto import _accel, kernels

from conftest import run_without_numba

vec = st.integers(1, 12).flatmap(
    lambda m: arrays(np.float64, m, elements=st.floats(-50, 50, allow_nan=False)))


def _isotonic_brute(y):
    # the min-max formula evaluated directly
    m = len(y)
    return np.array([min(max(np.mean(y[k:j + 1]) for j in range(i, m)) for k in range(i + 1))
                     for i in range(m)])


@settings(max_examples=200, deadline=None)
@given(vec)
def test_pav_variants_agree(y):
    fa, la = kernels.pav_nonincreasing_loop(y)
    fb, lb = kernels.pav_nonincreasing_numpy(y)
    assert np.allclose(fa, fb, atol=1e-9)
    assert np.all(np.diff(fa) <= 1e-12)
    assert np.allclose(fa, _isotonic_brute(y), atol=1e-9)


def test_pav_labels_mark_blocks():
    y = np.array([1.0, 3.0, 2.0, 0.0])
    fit, labels = kernels.pav_nonincreasing_loop(y)
    assert np.allclose(fit, [2, 2, 2, 0])
    # equal neighbouring means are not pooled
    assert np.array_equal(labels, [0, 0, 1, 2])


@settings(max_examples=200, deadline=None)
@given(vec)
def test_simplex_variants_agree(v):
    a = kernels.simplex_project_loop(v)
    b = kernels.simplex_project_numpy(v)
    assert np.allclose(a, b, atol=1e-12)


def test_perm_project_example():
    p, order, labels = kernels.perm_project(np.array([0.6, 0.3, 0.1]), np.array([10.0, 0.0, 0.0]))
    assert np.allclose(p, [0.6, 0.2, 0.2])


def test_backend_flag():
    assert _accel.backend() in ("numba", "numpy")
    assert _accel.NUMBA_ENABLED == (_accel.backend() == "numba")


FALLBACK_SCRIPT = r"""
import json
import numpy as np
from owapto import _accel, solvers, geometry
from owapto.owa import fair_gini_weights
rng = np.random.default_rng(3)
C = rng.uniform(0, 1, (3, 5))
w = fair_gini_weights(3)
g = solvers.GridGraph(3, 4)
Cg = rng.uniform(0.5, 2, (3, 12))
gs = solvers.GroupStructure(np.array([0, 1, 0, 1, 0]), 2)
out = {
    "backend": _accel.backend(),
    "psg": solvers.solve_owa_projected_subgradient(w, C).solution.tolist(),
    "fw": solvers.solve_owa_moreau_frankwolfe(w, C, 0.1).solution.tolist(),
    "moreau": solvers.solve_owa_moreau(w, C, 0.1).solution.tolist(),
    "proj": geometry.project_permutahedron(w, C[:, 0]).tolist(),
    "path": solvers.solve_shortest_path(g, Cg[0]).tolist(),
    "owa_path": solvers.solve_owa_path(g, Cg, w)[0].tolist(),
    "rank": solvers.solve_fair_ranking_fw(C[0], gs, solvers.PositionBias.dcg(5), 0.5,
                                          fair_gini_weights(2), T=20).Pi.tolist(),
}
print(json.dumps(out))
"""


@pytest.fixture(scope="module")
def both_backends():
    import subprocess
    import sys

    fast = subprocess.run([sys.executable, "-c", FALLBACK_SCRIPT], capture_output=True, text=True,
                          timeout=600)
    slow = run_without_numba(FALLBACK_SCRIPT)
    assert fast.returncode == 0, fast.stderr
    assert slow.returncode == 0, slow.stderr
    return json.loads(fast.stdout), json.loads(slow.stdout)


def test_fallback_selected_by_env(both_backends):
    fast, slow = both_backends
    assert slow["backend"] == "numpy"
    assert fast["backend"] in ("numba", "numpy")


@pytest.mark.parametrize("key", ["psg", "fw", "moreau", "proj", "path", "owa_path", "rank"])
def test_backends_agree(both_backends, key):
    fast, slow = both_backends
    assert np.allclose(fast[key], slow[key], atol=1e-8)
