import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from demandclust.sdtw import (brute_force_soft_dtw, cross_soft_dtw, hard_dtw,
                              pairwise_cost_matrix, pairwise_divergence, self_soft_dtw,
                              soft_dtw, soft_dtw_divergence, soft_dtw_gradient,
                              soft_dtw_value_and_gradient)

unit = st.floats(0.0, 1.0, allow_nan=False)
short = arrays(np.float64, st.integers(1, 5), elements=unit)
gammas = st.sampled_from([0.1, 0.5, 1.0, 2.0])

# Reference values from an independent 40-digit enumeration of all
# alignments (mpmath), frozen here.
FROZEN = [
    ([0, 1, 2], [0, 2], 1.0, 0.12265356040414984267),
    ([0.5, 0.1, 0.9, 0.3], [0.2, 0.8, 0.4], 0.5, -0.91882217106915486489),
    ([1, 0, 0, 1], [0, 1, 1, 0, 0], 2.0, -5.560171120609908053),
]
FROZEN_GRAD = [0.4648161134802345742, -0.85949538825039626183,
               0.81107200795536898667, -0.4382238486664656604]


def fd_grad(x, y, gamma, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (soft_dtw(x + e, y, gamma).value - soft_dtw(x - e, y, gamma).value) / (2 * h)
    return g


def test_cost_matrix_examples():
    np.testing.assert_array_equal(pairwise_cost_matrix([0], [3]).entries, [[9]])
    np.testing.assert_array_equal(pairwise_cost_matrix([1, 2], [1, 3]).entries, [[0, 4], [1, 1]])
    x = np.array([0.3, 0.1, 0.7])
    assert np.all(np.diag(pairwise_cost_matrix(x, x).entries) == 0)
    np.testing.assert_array_equal(pairwise_cost_matrix([1, 2], [1, 3], "absolute").entries,
                                  [[0, 2], [1, 1]])


def test_cost_matrix_errors():
    with pytest.raises(ValueError):
        pairwise_cost_matrix([], [1.0])
    with pytest.raises(ValueError):
        pairwise_cost_matrix([1.0], [1.0], "cosine")


def test_soft_dtw_single_pair():
    assert soft_dtw([0], [3], 1.0).value == 9.0


def test_soft_dtw_two_by_two_zero_grid():
    assert soft_dtw([0, 0], [0, 0], 1.0).value == pytest.approx(-math.log(3), abs=1e-12)


@pytest.mark.parametrize("x, y, gamma, expected", FROZEN)
def test_soft_dtw_frozen_reference(x, y, gamma, expected):
    assert soft_dtw(x, y, gamma).value == pytest.approx(expected, abs=1e-13)


def test_soft_dtw_accumulator_shape():
    res = soft_dtw(np.zeros(3), np.zeros(5))
    assert res.accumulator.shape == (4, 6)
    assert res.accumulator[3, 5] == res.value


def test_self_distance_goes_to_zero_from_below():
    x = np.array([0.2, 0.9, 0.4, 0.4])
    vals = [soft_dtw(x, x, g).value for g in (1.0, 0.1, 0.01, 1e-3)]
    assert all(v < 0 for v in vals)
    assert vals == sorted(vals)
    assert abs(vals[-1]) < 1e-2


def test_soft_dtw_errors():
    with pytest.raises(ValueError):
        soft_dtw([1.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        soft_dtw([1.0], [1.0], -1.0)
    with pytest.raises(ValueError):
        soft_dtw([np.nan], [1.0])
    with pytest.raises(ValueError):
        soft_dtw([np.inf], [1.0])


def test_gradient_single_pair():
    np.testing.assert_allclose(soft_dtw_gradient([0], [3], 1.0), [-6.0], atol=1e-15)


def test_gradient_frozen_reference():
    g = soft_dtw_gradient([0.5, 0.1, 0.9, 0.3], [0.2, 0.8, 0.4], 0.5)
    np.testing.assert_allclose(g, FROZEN_GRAD, rtol=1e-10)


def test_gradient_constant_equal_series_sums_to_zero():
    x = np.full(5, 0.4)
    g = soft_dtw_gradient(x, x.copy(), 1.0)
    assert abs(g.sum()) < 1e-12
    np.testing.assert_allclose(g, fd_grad(x, x.copy(), 1.0), atol=1e-8)


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_gradient_matches_finite_differences(gamma):
    rng = np.random.default_rng(int(gamma * 10))
    for _ in range(5):
        x, y = rng.random(4), rng.random(4)
        g = soft_dtw_gradient(x, y, gamma)
        fd = fd_grad(x, y, gamma)
        assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-12)


def test_gradient_absolute_metric_rejected():
    with pytest.raises(ValueError, match="gradient requires differentiable inner metric"):
        soft_dtw_gradient([0.0, 1.0], [1.0], 1.0, metric="absolute")


def test_value_and_gradient_consistent():
    x, y = np.array([0.1, 0.5, 0.2]), np.array([0.3, 0.3])
    v, g = soft_dtw_value_and_gradient(x, y, 0.7)
    assert v == soft_dtw(x, y, 0.7).value
    np.testing.assert_array_equal(g, soft_dtw_gradient(x, y, 0.7))


def test_brute_force_examples():
    assert brute_force_soft_dtw([0, 0], [0, 0], 2.0) == pytest.approx(-2.0 * math.log(3), abs=1e-12)
    y = [0.5, 1.0, 3.0]
    assert brute_force_soft_dtw([1.0], y, 1.0) == pytest.approx(0.25 + 0 + 4.0, abs=1e-12)
    with pytest.raises(ValueError, match="oracle restricted to tiny instances"):
        brute_force_soft_dtw(np.zeros(7), np.zeros(2))


def test_brute_force_handles_absolute_metric():
    x, y = [0.1, 0.8, 0.3], [0.5, 0.2]
    assert soft_dtw(x, y, 0.5, "absolute").value == pytest.approx(
        brute_force_soft_dtw(x, y, 0.5, "absolute"), abs=1e-12)


@given(short, short, gammas)
def test_oracle_equivalence(x, y, gamma):
    assert abs(soft_dtw(x, y, gamma).value - brute_force_soft_dtw(x, y, gamma)) <= 1e-9


@given(short, short, gammas)
def test_symmetry(x, y, gamma):
    assert soft_dtw(x, y, gamma).value == pytest.approx(soft_dtw(y, x, gamma).value, abs=1e-12)


@given(short, short, gammas)
def test_bounded_by_hard_dtw(x, y, gamma):
    assert soft_dtw(x, y, gamma).value <= hard_dtw(x, y) + 1e-12


@given(short, short)
def test_non_increasing_in_gamma(x, y):
    vals = [soft_dtw(x, y, g).value for g in (0.01, 0.1, 0.5, 1.0, 2.0, 5.0)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_hard_dtw_examples():
    x = np.array([0.3, 0.6, 0.1])
    assert hard_dtw(x, x) == 0.0
    assert hard_dtw([0], [3]) == 9.0
    assert hard_dtw([0, 1, 1, 2], [0, 1, 2]) == 0.0
    with pytest.raises(ValueError):
        hard_dtw([], [1.0])


def test_hard_dtw_limit():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x, y = rng.random(5), rng.random(5)
        assert abs(soft_dtw(x, y, 1e-3).value - hard_dtw(x, y)) <= 1e-2


def test_divergence_properties():
    rng = np.random.default_rng(5)
    x, y = rng.random(6), rng.random(8)
    assert soft_dtw_divergence(x, x) == pytest.approx(0.0, abs=1e-12)
    assert soft_dtw_divergence(x, y) > 0
    assert soft_dtw_divergence(x, y) == pytest.approx(soft_dtw_divergence(y, x), abs=1e-12)


def test_matrix_helpers_match_scalar_calls():
    rng = np.random.default_rng(9)
    X, Y = rng.random((3, 6)), rng.random((4, 6))
    C = cross_soft_dtw(X, Y, 0.5)
    for a in range(3):
        for b in range(4):
            assert C[a, b] == soft_dtw(X[a], Y[b], 0.5).value
    np.testing.assert_array_equal(self_soft_dtw(X, 0.5), [soft_dtw(r, r, 0.5).value for r in X])
    P = pairwise_divergence(X, 0.5)
    assert np.array_equal(P, P.T) and np.all(np.diag(P) == 0) and np.all(P >= 0)
    assert P[0, 1] == pytest.approx(soft_dtw_divergence(X[0], X[1], 0.5), abs=1e-12)


def test_runtime_scales_with_grid_size():
    rng = np.random.default_rng(0)
    x, y = rng.random(100), rng.random(100)
    xx, yy = rng.random(200), rng.random(200)
    soft_dtw(x, y)

    def best(a, b):
        ts = []
        for _ in range(15):
            t = time.perf_counter()
            soft_dtw(a, b)
            ts.append(time.perf_counter() - t)
        return min(ts)

    ratio = best(xx, yy) / best(x, y)
    # four times the cells: expect ~4x, allow a factor-of-two band
    assert 2.0 <= ratio <= 8.0
