import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from owapto.owa import (
    OwaWeights,
    SortPermutation,
    fair_gini_weights,
    owa_decision_subgradient,
    owa_of_decision,
    owa_subgradient,
    owa_value,
)

from conftest import all_perms, fd_grad

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def test_worked_example():
    assert owa_value([0.5, 0.3, 0.2], [3, 1, 2]) == pytest.approx(1.7, abs=1e-15)


def test_uniform_weights_give_mean(rng):
    y = rng.normal(size=7)
    assert owa_value(np.full(7, 1 / 7), y) == pytest.approx(y.mean(), abs=1e-14)


def test_constant_vector():
    assert owa_value(fair_gini_weights(4), np.full(4, 2.5)) == pytest.approx(2.5, abs=1e-14)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        owa_value([0.5, 0.5], [1.0, 2.0, 3.0])


def test_non_finite_criteria_rejected():
    with pytest.raises(ValueError):
        owa_value([0.5, 0.5], [1.0, np.nan])


class TestWeights:
    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            OwaWeights([0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            OwaWeights([1.2, -0.2])

    def test_fair_needs_strict_decrease(self):
        with pytest.raises(ValueError):
            OwaWeights([0.5, 0.5], fair=True)
        OwaWeights([0.6, 0.4], fair=True)

    def test_immutable(self):
        w = OwaWeights([0.7, 0.3])
        with pytest.raises(ValueError):
            w.w[0] = 0.1

    @pytest.mark.parametrize("m,expected", [(1, [1.0]), (2, [0.8, 0.2]), (3, [9 / 14, 4 / 14, 1 / 14])])
    def test_gini(self, m, expected):
        assert np.allclose(fair_gini_weights(m).w, expected, atol=1e-15)

    def test_gini_fair_and_normalized(self):
        for m in range(2, 10):
            w = fair_gini_weights(m)
            assert w.fair and np.all(np.diff(w.w) < 0)
            assert abs(w.w.sum() - 1) <= 1e-12

    def test_gini_rejects_zero(self):
        with pytest.raises(ValueError):
            fair_gini_weights(0)


class TestSubgradient:
    def test_worked_example(self):
        assert np.allclose(owa_subgradient([0.5, 0.3, 0.2], [3, 1, 2]), [0.2, 0.5, 0.3])

    def test_stable_ties(self):
        w = np.full(3, 1 / 3)
        assert np.allclose(owa_subgradient(w, np.ones(3)), w)
        # equal entries: earlier index takes the earlier rank
        assert np.allclose(owa_subgradient([0.5, 0.3, 0.2], [1.0, 1.0, 0.0]), [0.3, 0.2, 0.5])

    def test_two_entries(self):
        assert np.allclose(owa_subgradient([0.7, 0.3], [1, 2]), [0.7, 0.3])

    def test_matches_finite_differences(self, rng):
        for _ in range(50):
            m = int(rng.integers(1, 8))
            w = fair_gini_weights(m)
            y = rng.normal(size=m)
            fd = fd_grad(lambda t: owa_value(w, t), y)
            assert np.allclose(owa_subgradient(w, y), fd, rtol=1e-5, atol=1e-8)

    def test_sort_permutation(self, rng):
        y = rng.normal(size=9)
        sp = SortPermutation.of(y)
        assert np.all(np.diff(y[sp.sigma]) >= 0)
        assert np.array_equal(sp.sigma[sp.sigma_inv], np.arange(9))


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 6).flatmap(lambda m: st.tuples(
        arrays(np.float64, m, elements=st.floats(0.01, 1)),
        arrays(np.float64, m, elements=finite))))
    def test_min_form(self, data):
        raw, y = data
        w = np.sort(raw / raw.sum())[::-1]
        w = w / w.sum()
        brute = min(all_perms(w) @ y)
        assert abs(owa_value(w, y) - brute) <= 1e-9 * max(1.0, np.abs(y).max())

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 5).flatmap(lambda m: arrays(np.float64, m, elements=finite)))
    def test_impartiality(self, y):
        w = fair_gini_weights(y.size)
        v = owa_value(w, y)
        for p in itertools.permutations(range(y.size)):
            assert owa_value(w, y[list(p)]) == pytest.approx(v, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, 4, elements=finite), st.integers(0, 3), st.floats(0, 10))
    def test_monotone(self, y, k, delta):
        w = fair_gini_weights(4)
        up = y.copy()
        up[k] += delta
        assert owa_value(w, up) >= owa_value(w, y) - 1e-12

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, 4, elements=finite), st.floats(0.05, 0.45))
    def test_equitability(self, y, frac):
        w = fair_gini_weights(4)
        i, j = int(np.argmax(y)), int(np.argmin(y))
        gap = y[i] - y[j]
        if gap < 1e-3:
            return
        t = y.copy()
        t[i] -= frac * gap
        t[j] += frac * gap
        assert owa_value(w, t) > owa_value(w, y)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
    def test_supergradient_inequality(self, y, y2):
        w = fair_gini_weights(5)
        g = owa_subgradient(w, y)
        assert owa_value(w, y2) <= owa_value(w, y) + g @ (y2 - y) + 1e-9


class TestDecision:
    def test_identity_composition(self, rng):
        w = fair_gini_weights(3)
        y = rng.normal(size=3)
        assert owa_of_decision(w, np.eye(3), y) == pytest.approx(owa_value(w, y))

    def test_single_criterion_is_linear(self, rng):
        c, x = rng.normal(size=5), rng.uniform(size=5)
        assert owa_of_decision([1.0], c[None], x) == pytest.approx(c @ x)

    def test_worked_example(self):
        assert owa_of_decision([0.7, 0.3], np.eye(2), [2, 5]) == pytest.approx(2.9)

    def test_chain_rule(self, rng):
        w = fair_gini_weights(3)
        C, x = rng.normal(size=(3, 4)), rng.uniform(size=4)
        fd = fd_grad(lambda t: owa_of_decision(w, C, t), x)
        assert np.allclose(owa_decision_subgradient(w, C, x), fd, atol=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            owa_of_decision([1.0], np.ones((1, 3)), np.ones(2))
