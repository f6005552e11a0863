import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from owapto.geometry import (
    Permutahedron,
    SmoothingParam,
    moreau_owa_gradient,
    moreau_owa_hessian,
    moreau_owa_value,
    permutahedron_projection_jacobian,
    project_permutahedron,
    project_simplex,
    simplex_projection_jacobian,
)
from owapto.owa import fair_gini_weights, owa_subgradient, owa_value

from conftest import all_perms, fd_grad

vec = lambda m: arrays(np.float64, m, elements=st.floats(-20, 20, allow_nan=False))


class TestSimplex:
    def test_member_is_fixed(self):
        v = np.array([0.2, 0.5, 0.3])
        assert np.allclose(project_simplex(v), v)

    def test_symmetric(self):
        assert np.allclose(project_simplex([0.2, 0.2, 0.2]), np.full(3, 1 / 3))

    def test_vertex(self):
        assert np.allclose(project_simplex([2.0, 0.0, 0.0]), [1, 0, 0])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            project_simplex([np.inf, 0.0])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 8).flatmap(vec))
    def test_variational_inequality(self, v):
        p = project_simplex(v)
        assert abs(p.sum() - 1) <= 1e-10 and p.min() >= 0
        assert np.max((np.eye(v.size) - p) @ (v - p)) <= 1e-8

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6).flatmap(lambda m: st.tuples(vec(m), vec(m))))
    def test_idempotent_nonexpansive(self, pair):
        u, v = pair
        pu, pv = project_simplex(u), project_simplex(v)
        assert np.allclose(project_simplex(pu), pu, atol=1e-12)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-10

    def test_jacobian_matches_fd(self, rng):
        for _ in range(20):
            v = rng.normal(size=6)
            J = simplex_projection_jacobian(v)
            fd = np.array([fd_grad(lambda t: project_simplex(t)[i], v) for i in range(6)])
            assert np.allclose(J, fd, atol=1e-6)


class TestPermutahedron:
    def test_membership(self):
        P = Permutahedron([0.6, 0.3, 0.1])
        assert P.contains([0.3, 0.1, 0.6])
        assert P.contains(np.full(3, 1 / 3))
        assert not P.contains([0.7, 0.2, 0.1])
        assert not P.contains([0.5, 0.3, 0.1])

    def test_vertices_count(self):
        assert len(Permutahedron([3.0, 2.0, 1.0, 0.0]).vertices()) == 24
        assert len(Permutahedron([1.0, 1.0, 0.0]).vertices()) == 3

    def test_vertex_and_centroid_are_fixed(self):
        base = fair_gini_weights(3).w
        v = base[[2, 0, 1]]
        assert np.allclose(project_permutahedron(base, v), v)
        c = np.full(3, base.mean())
        assert np.allclose(project_permutahedron(base, c), c)

    def test_worked_example(self):
        base = np.array([0.6429, 0.2857, 0.0714])
        v = np.array([10.0, 0.0, 0.0])
        p = project_permutahedron(base, v)
        assert np.argmax(p) == 0
        assert np.max((all_perms(base) - p) @ (v - p)) <= 1e-8

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 6).flatmap(lambda m: st.tuples(
        arrays(np.float64, m, elements=st.floats(0, 1)), vec(m))))
    def test_variational_inequality(self, data):
        base, v = data
        p = project_permutahedron(base, v)
        assert Permutahedron(base).contains(p)
        assert np.max((all_perms(base) - p) @ (v - p)) <= 1e-8 * max(1.0, np.abs(v).max())

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6).flatmap(lambda m: st.tuples(vec(m), vec(m))))
    def test_idempotent_nonexpansive(self, pair):
        u, v = pair
        base = fair_gini_weights(u.size).w
        pu, pv = project_permutahedron(base, u), project_permutahedron(base, v)
        assert np.allclose(project_permutahedron(base, pu), pu, atol=1e-12)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-10

    def test_structure_returned(self, rng):
        v = rng.normal(size=5)
        p, order, labels = project_permutahedron(fair_gini_weights(5), v, return_structure=True)
        assert np.array_equal(order, np.argsort(-v, kind="stable"))
        assert labels.shape == (5,)

    def test_jacobian_matches_fd(self, rng):
        base = fair_gini_weights(5).w
        for _ in range(20):
            v = rng.normal(0, 0.3, 5)
            J = permutahedron_projection_jacobian(base, v)
            fd = np.array([fd_grad(lambda t: project_permutahedron(base, t)[i], v) for i in range(5)])
            assert np.allclose(J, fd, atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project_permutahedron([0.5, 0.5], [1.0, 2.0, 3.0])


class TestMoreau:
    def test_beta_validation(self):
        with pytest.raises(ValueError):
            SmoothingParam(0.0)
        with pytest.raises(ValueError):
            moreau_owa_gradient([0.5, 0.5], [1, 2], -1.0)

    def test_large_beta_gives_centroid(self, rng):
        w = fair_gini_weights(4)
        assert np.allclose(moreau_owa_gradient(w, rng.normal(size=4), 1e9), 0.25, atol=1e-8)

    def test_small_beta_recovers_subgradient(self, rng):
        w = fair_gini_weights(4)
        for _ in range(20):
            y = rng.normal(size=4)
            assert np.allclose(moreau_owa_gradient(w, y, 1e-6), owa_subgradient(w, y), atol=1e-6)

    def test_two_criteria_segment(self):
        w = np.array([0.7, 0.3])
        v = np.array([-1.0, -2.0])
        p = moreau_owa_gradient(w, -v, 1.0)
        verts = np.array([[0.7, 0.3], [0.3, 0.7]])
        assert np.max((verts - p) @ (v - p)) <= 1e-12

    def test_value_gradient_consistency(self, rng):
        for _ in range(50):
            m = int(rng.integers(2, 6))
            w = fair_gini_weights(m)
            beta = rng.uniform(0.05, 2)
            y = rng.normal(size=m)
            fd = fd_grad(lambda t: moreau_owa_value(w, t, beta), y)
            assert np.allclose(moreau_owa_gradient(w, y, beta), fd, rtol=1e-5, atol=1e-8)

    def test_hessian_matches_fd(self, rng):
        w = fair_gini_weights(4)
        y = rng.normal(size=4)
        H = moreau_owa_hessian(w, y, 0.7)
        fd = np.array([fd_grad(lambda t: moreau_owa_gradient(w, t, 0.7)[i], y) for i in range(4)])
        assert np.allclose(H, fd, atol=1e-6)

    def test_envelope_bounds(self, rng):
        # upper envelope of the concave OWA: owa <= value <= owa + beta/2 |w|^2
        for _ in range(100):
            w = fair_gini_weights(4)
            y = rng.normal(size=4)
            beta = rng.uniform(1e-3, 1)
            v, o = moreau_owa_value(w, y, beta), owa_value(w, y)
            assert o - 1e-12 <= v <= o + 0.5 * beta * w.w @ w.w + 1e-12

    def test_constant_vector(self):
        w = fair_gini_weights(3)
        assert moreau_owa_value(w, np.full(3, 2.0), 0.3) == pytest.approx(2.0 + 0.3 / 6)

    def test_beta_to_zero_linear_gap(self, rng):
        w = fair_gini_weights(3)
        y = rng.normal(size=3)
        gaps = [moreau_owa_value(w, y, b) - owa_value(w, y) for b in (1e-2, 1e-4, 1e-6)]
        assert gaps[0] <= 0.5e-2 and gaps[1] <= 0.5e-4 and gaps[2] <= 0.5e-6

    def test_concave_midpoint(self, rng):
        w = fair_gini_weights(4)
        for _ in range(100):
            a, b = rng.normal(size=4), rng.normal(size=4)
            mid = moreau_owa_value(w, (a + b) / 2, 0.5)
            assert mid >= 0.5 * (moreau_owa_value(w, a, 0.5) + moreau_owa_value(w, b, 0.5)) - 1e-12

    def test_gradient_lipschitz_and_member(self, rng):
        w = fair_gini_weights(5)
        P = Permutahedron(w.w)
        for _ in range(100):
            a, b = rng.normal(size=5), rng.normal(size=5)
            ga, gb = moreau_owa_gradient(w, a, 0.4), moreau_owa_gradient(w, b, 0.4)
            assert P.contains(ga) and ga.min() >= -1e-12
            assert np.linalg.norm(ga - gb) <= np.linalg.norm(a - b) / 0.4 + 1e-10
