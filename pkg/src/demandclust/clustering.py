"""k-Means over daily demand patterns with three notions of distance.

``sdtw``      soft-DTW to barycenter centers
``euclidean`` squared Euclidean distance to mean centers
``simple``    squared Euclidean distance in the 2-D work-hour feature space
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .barycenter import compute_barycenter
from .sdtw import _check_gamma, cross_soft_dtw, self_soft_dtw
from .ts_core import WORK_HOURS, min_max_normalize, stack, work_hour_features

log = logging.getLogger(__name__)

KINDS = ("sdtw", "euclidean", "simple")
DEFAULT_GAMMA = 1.0


@dataclass(frozen=True)
class ClusterMethod:
    kind: str = "sdtw"
    gamma: Optional[float] = None
    normalize_input: Optional[bool] = None
    work_window: tuple = WORK_HOURS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"method must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "sdtw":
            object.__setattr__(self, "gamma", _check_gamma(
                DEFAULT_GAMMA if self.gamma is None else self.gamma))
        elif self.gamma is not None:
            raise ValueError("gamma only applies to the sdtw method")
        if self.normalize_input is None:
            object.__setattr__(self, "normalize_input", self.kind != "simple")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma,
                "normalize_input": self.normalize_input,
                "work_window": list(self.work_window)}


@dataclass(frozen=True)
class Clustering:
    """Result of :func:`kmeans`.

    ``centers`` are barycenters (sdtw), means (euclidean) or feature-space
    means (simple). ``member_means`` always holds the within-cluster mean of
    the prepared patterns so barycenters and means can be compared.
    """

    k: int
    assignments: np.ndarray
    centers: np.ndarray
    objective: float
    n_iter: int
    seed: int
    method: ClusterMethod
    member_means: np.ndarray = None
    restart_objectives: tuple = ()
    meta: dict = field(default_factory=dict)

    def partition(self) -> frozenset:
        """Clusters as a set of member-index sets (label free)."""
        return frozenset(frozenset(np.flatnonzero(self.assignments == j).tolist())
                         for j in range(self.k))


def prepare(dataset, method: ClusterMethod) -> np.ndarray:
    """Turn a dataset into the matrix the method clusters on."""
    X = stack(dataset)
    if method.normalize_input:
        X = np.vstack([min_max_normalize(row).values for row in X])
    if method.kind == "simple":
        X = np.array([work_hour_features(row, method.work_window).as_array() for row in X])
    return np.ascontiguousarray(X, dtype=np.float64)


def _sq_euclidean(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def center_distances(X: np.ndarray, centers: np.ndarray, method: ClusterMethod) -> np.ndarray:
    """(n, k) matrix of distances from prepared patterns to centers."""
    if method.kind == "sdtw":
        return cross_soft_dtw(centers, X, method.gamma).T
    return _sq_euclidean(X, centers)


def seeding_distance(method: ClusterMethod, X: np.ndarray) -> Callable:
    """Distance used by k-Means++ (the seeding squares it).

    For sdtw this is the square root of the soft-DTW divergence, which is
    zero for identical series, unlike the raw soft-DTW value.
    """
    if method.kind != "sdtw":
        return lambda A, B: np.sqrt(_sq_euclidean(A, B))
    gamma = method.gamma
    self_x = {}

    def dist(A, B):
        key = id(A)
        if key not in self_x:
            self_x[key] = self_soft_dtw(A, gamma)
        raw = cross_soft_dtw(A, B, gamma)
        div = raw - 0.5 * (self_x[key][:, None] + self_soft_dtw(B, gamma)[None, :])
        return np.sqrt(np.maximum(div, 0.0))

    return dist


def kmeanspp_seed(X, k: int, distance: Callable, rng: np.random.Generator) -> np.ndarray:
    """Indices of k k-Means++ seeds.

    ``distance(A, B)`` returns the (len(A), len(B)) distance matrix; each
    new seed is drawn with probability proportional to its squared distance
    to the nearest seed chosen so far.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    chosen = [int(rng.integers(n))]
    closest = distance(X, X[chosen[-1]][None, :])[:, 0] ** 2
    while len(chosen) < k:
        closest[chosen] = 0.0
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # every remaining point coincides with a seed
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        closest = np.minimum(closest, distance(X, X[nxt][None, :])[:, 0] ** 2)
    return np.array(chosen)


def _assign(D: np.ndarray, k: int) -> np.ndarray:
    labels = np.argmin(D, axis=1)  # first minimum: lowest index wins ties
    counts = np.bincount(labels, minlength=k)
    own = D[np.arange(D.shape[0]), labels]
    while np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        donors = counts[labels] > 1
        cand = np.where(donors, own, -np.inf)
        far = int(np.argmax(cand))
        counts[labels[far]] -= 1
        labels[far] = empty
        counts[empty] = 1
        own[far] = -np.inf
    return labels


def _update(X, labels, centers, method, bary_max_iter):
    new = centers.copy()
    for j in range(centers.shape[0]):
        members = X[labels == j]
        if method.kind == "sdtw":
            res = compute_barycenter(members, init=centers[j], gamma=method.gamma,
                                     max_iter=bary_max_iter)
            new[j] = res.center
        else:
            new[j] = members.mean(axis=0)
    return new


def _objective(D, labels) -> float:
    return float(D[np.arange(D.shape[0]), labels].sum())


def _single_run(X, k, method, rng, max_iter, bary_max_iter):
    seeds = kmeanspp_seed(X, k, seeding_distance(method, X), rng)
    centers = X[seeds].copy()
    D = center_distances(X, centers, method)
    labels = _assign(D, k)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centers = _update(X, labels, centers, method, bary_max_iter)
        D = center_distances(X, centers, method)
        new_labels = _assign(D, k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers, _objective(D, labels), n_iter


def kmeans(dataset, k: int, method: ClusterMethod | str = "sdtw", seed: int = 0,
           n_restarts: int = 8, max_iter: int = 50, bary_max_iter: int = 30) -> Clustering:
    """Cluster equal-length patterns into ``k`` groups.

    Runs ``n_restarts`` k-Means++ seeded Lloyd iterations with restart
    seeds spawned from ``seed`` and keeps the lowest objective (first one
    on ties).
    """
    if isinstance(method, str):
        method = ClusterMethod(method)
    X = prepare(dataset, method)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    best = None
    objectives = []
    for child in np.random.SeedSequence(seed).spawn(n_restarts):
        run = _single_run(X, k, method, np.random.default_rng(child), max_iter, bary_max_iter)
        objectives.append(run[2])
        if best is None or run[2] < best[2]:
            best = run
    labels, centers, obj, n_iter = best
    means = np.vstack([X[labels == j].mean(axis=0) for j in range(k)])
    log.debug("kmeans %s k=%d objective=%.6g", method.kind, k, obj)
    return Clustering(k=k, assignments=labels, centers=centers, objective=obj, n_iter=n_iter,
                      seed=seed, method=method, member_means=means,
                      restart_objectives=tuple(objectives))


def assignment_distances(dataset, clustering: Clustering) -> np.ndarray:
    """Distance of every pattern to every center under the clustering's measure."""
    X = prepare(dataset, clustering.method)
    if X.shape[1] != clustering.centers.shape[1]:
        raise ValueError("dataset does not match the clustering's center shape")
    return center_distances(X, clustering.centers, clustering.method)
