"""Soft dynamic time warping: cost matrices, soft-min recursion and gradients.

The accumulator uses a large finite sentinel instead of ``inf`` on its
borders so that every soft-min stays well defined arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

BIG = 1e30
METRICS = ("squared_euclidean", "absolute")
MAX_ORACLE_LEN = 6


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    inner_metric: str = "squared_euclidean"


@dataclass(frozen=True)
class SdtwResult:
    """Soft-DTW value plus the (M+1)x(N+1) accumulator it was read from."""

    value: float
    accumulator: np.ndarray


def _as_series(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must be a non-empty series")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not gamma > 0 or not np.isfinite(gamma):
        raise ValueError(f"gamma must be a positive finite number, got {gamma}")
    return gamma


@njit(cache=True)
def _sq_cost(x, y):
    m, n = x.shape[0], y.shape[0]
    out = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            d = x[i] - y[j]
            out[i, j] = d * d
    return out


@njit(cache=True)
def _softmin_terms(a, b, c, inv_gamma):
    # max-shifted exponentials; the minimum's own term is exactly 1
    if a <= b and a <= c:
        return a, 1.0, np.exp((a - b) * inv_gamma), np.exp((a - c) * inv_gamma)
    if b <= c:
        return b, np.exp((b - a) * inv_gamma), 1.0, np.exp((b - c) * inv_gamma)
    return c, np.exp((c - a) * inv_gamma), np.exp((c - b) * inv_gamma), 1.0


@njit(cache=True)
def _forward(D, gamma):
    m, n = D.shape
    inv = 1.0 / gamma
    R = np.full((m + 1, n + 1), BIG)
    R[0, 0] = 0.0
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            lo, ea, eb, ec = _softmin_terms(R[i - 1, j - 1], R[i - 1, j], R[i, j - 1], inv)
            R[i, j] = D[i - 1, j - 1] + lo - gamma * np.log(ea + eb + ec)
    return R


@njit(cache=True)
def _forward_weights(D, gamma):
    # Besides the accumulator, keep the soft-min weights of the diagonal,
    # upper and left predecessors of every cell for the backward pass.
    m, n = D.shape
    inv = 1.0 / gamma
    R = np.full((m + 1, n + 1), BIG)
    R[0, 0] = 0.0
    W = np.zeros((3, m + 1, n + 1))
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            lo, ea, eb, ec = _softmin_terms(R[i - 1, j - 1], R[i - 1, j], R[i, j - 1], inv)
            s = ea + eb + ec
            R[i, j] = D[i - 1, j - 1] + lo - gamma * np.log(s)
            W[0, i, j] = ea / s
            W[1, i, j] = eb / s
            W[2, i, j] = ec / s
    return R, W


@njit(cache=True)
def _backward(W, m, n):
    # E[i, j] = d value / d D[i, j]: expected alignment matrix.
    E = np.zeros((m + 2, n + 2))
    E[m, n] = 1.0
    for i in range(m, 0, -1):
        for j in range(n, 0, -1):
            if i == m and j == n:
                continue
            E[i, j] = (E[i + 1, j + 1] * W[0, i + 1, j + 1] if i < m and j < n else 0.0) \
                + (E[i + 1, j] * W[1, i + 1, j] if i < m else 0.0) \
                + (E[i, j + 1] * W[2, i, j + 1] if j < n else 0.0)
    return E[1:m + 1, 1:n + 1]


@njit(cache=True)
def _value(x, y, gamma):
    D = _sq_cost(x, y)
    R = _forward(D, gamma)
    return R[x.shape[0], y.shape[0]]


@njit(cache=True)
def _value_grad(x, y, gamma):
    m, n = x.shape[0], y.shape[0]
    D = _sq_cost(x, y)
    R, W = _forward_weights(D, gamma)
    E = _backward(W, m, n)
    g = np.zeros(m)
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += E[i, j] * (x[i] - y[j])
        g[i] = 2.0 * acc
    return R[m, n], g


@njit(cache=True)
def _family_value_grad(x, Y, gamma):
    total = 0.0
    grad = np.zeros(x.shape[0])
    for k in range(Y.shape[0]):
        v, g = _value_grad(x, Y[k], gamma)
        total += v
        grad += g
    return total, grad


@njit(cache=True)
def _cross_values(X, Y, gamma):
    out = np.empty((X.shape[0], Y.shape[0]))
    for a in range(X.shape[0]):
        for b in range(Y.shape[0]):
            out[a, b] = _value(X[a], Y[b], gamma)
    return out


@njit(cache=True)
def _self_values(X, gamma):
    out = np.empty(X.shape[0])
    for a in range(X.shape[0]):
        out[a] = _value(X[a], X[a], gamma)
    return out


@njit(cache=True)
def _hard_dtw(D):
    m, n = D.shape
    R = np.full((m + 1, n + 1), BIG)
    R[0, 0] = 0.0
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            R[i, j] = D[i - 1, j - 1] + min(R[i - 1, j - 1], R[i - 1, j], R[i, j - 1])
    return R[m, n]


def pairwise_cost_matrix(x, y, metric: str = "squared_euclidean") -> CostMatrix:
    """Point-wise cost ``delta(x_m, y_n)`` for every pair of samples."""
    x = _as_series(x, "x")
    y = _as_series(y, "y")
    diff = x[:, None] - y[None, :]
    if metric == "squared_euclidean":
        entries = diff * diff
    elif metric == "absolute":
        entries = np.abs(diff)
    else:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return CostMatrix(entries, metric)


def soft_dtw(x, y, gamma: float = 1.0, metric: str = "squared_euclidean") -> SdtwResult:
    """Soft-DTW between two univariate series.

    Evaluates ``-gamma * log(sum_A exp(-<A, D> / gamma))`` over all monotone
    alignments A with the O(M*N) soft-min recursion. The result is not
    clipped at zero and the self-distance is generally negative.
    """
    gamma = _check_gamma(gamma)
    D = pairwise_cost_matrix(x, y, metric).entries
    R = _forward(D, gamma)
    m, n = D.shape
    return SdtwResult(float(R[m, n]), R)


def soft_dtw_gradient(x, y, gamma: float = 1.0,
                      metric: str = "squared_euclidean") -> np.ndarray:
    """Gradient of :func:`soft_dtw` with respect to ``x``."""
    if metric != "squared_euclidean":
        raise ValueError("gradient requires differentiable inner metric")
    gamma = _check_gamma(gamma)
    x = _as_series(x, "x")
    y = _as_series(y, "y")
    return _value_grad(x, y, gamma)[1]


def soft_dtw_value_and_gradient(x, y, gamma: float = 1.0) -> tuple[float, np.ndarray]:
    gamma = _check_gamma(gamma)
    v, g = _value_grad(_as_series(x, "x"), _as_series(y, "y"), gamma)
    return float(v), g


def soft_dtw_divergence(x, y, gamma: float = 1.0) -> float:
    """Debiased soft-DTW: ``d(x, y) - (d(x, x) + d(y, y)) / 2``.

    Non-negative and zero for ``x == y``; used wherever a dissimilarity
    must behave like a distance (silhouettes, k-means++ weights).
    """
    gamma = _check_gamma(gamma)
    x = _as_series(x, "x")
    y = _as_series(y, "y")
    return float(_value(x, y, gamma) - 0.5 * (_value(x, x, gamma) + _value(y, y, gamma)))


def cross_soft_dtw(X, Y, gamma: float = 1.0) -> np.ndarray:
    """Matrix of soft-DTW values ``d(X[a], Y[b])`` for two stacks of series."""
    gamma = _check_gamma(gamma)
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    Y = np.ascontiguousarray(np.atleast_2d(np.asarray(Y, dtype=np.float64)))
    return _cross_values(X, Y, gamma)


def self_soft_dtw(X, gamma: float = 1.0) -> np.ndarray:
    gamma = _check_gamma(gamma)
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    return _self_values(X, gamma)


def pairwise_divergence(X, gamma: float = 1.0) -> np.ndarray:
    """Symmetric matrix of soft-DTW divergences within one stack of series.

    ``d(x, y)`` and ``d(y, x)`` agree for a symmetric inner cost; the two
    triangles are averaged anyway so the result is exactly symmetric.
    """
    raw = cross_soft_dtw(X, X, gamma)
    raw = 0.5 * (raw + raw.T)
    diag = np.diag(raw).copy()
    div = raw - 0.5 * (diag[:, None] + diag[None, :])
    np.fill_diagonal(div, 0.0)
    return np.maximum(div, 0.0)


def hard_dtw(x, y, metric: str = "squared_euclidean") -> float:
    """Classical DTW: cost of the optimal monotone warping path."""
    D = pairwise_cost_matrix(x, y, metric).entries
    return float(_hard_dtw(D))


def _monotone_paths(m: int, n: int):
    """Yield every warping path on an m x n grid as a list of (i, j) cells."""
    moves = ((0, 1), (1, 1), (1, 0))

    def walk(i, j, path):
        if i == m - 1 and j == n - 1:
            yield path
            return
        for di, dj in moves:
            ni, nj = i + di, j + dj
            if ni < m and nj < n:
                yield from walk(ni, nj, path + [(ni, nj)])

    yield from walk(0, 0, [(0, 0)])


def brute_force_soft_dtw(x, y, gamma: float = 1.0,
                         metric: str = "squared_euclidean") -> float:
    """Soft-DTW by explicit enumeration of every alignment matrix.

    Exponential in the series lengths; restricted to tiny inputs and meant
    as a test oracle for :func:`soft_dtw`.
    """
    gamma = _check_gamma(gamma)
    D = pairwise_cost_matrix(x, y, metric).entries
    m, n = D.shape
    if m > MAX_ORACLE_LEN or n > MAX_ORACLE_LEN:
        raise ValueError("oracle restricted to tiny instances")
    costs = np.array([sum(D[i, j] for i, j in p) for p in _monotone_paths(m, n)])
    z = -costs / gamma
    top = z.max()
    return float(-gamma * (top + np.log(np.exp(z - top).sum())))

