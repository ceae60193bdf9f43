"""Scoring clusterings: success rates against ground truth, silhouettes, cluster analysis."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import ClusterMethod, Clustering, kmeans, prepare
from .sdtw import pairwise_divergence


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class SilhouetteReport:
    ids: tuple
    clusters: tuple
    values: tuple
    mean: float
    k: int

    @property
    def per_member(self) -> list:
        return list(zip(self.ids, self.clusters, self.values))


@dataclass(frozen=True)
class ClusterAnalysis:
    rows: tuple  # (k, mean silhouette, objective)
    best_k: int
    clusterings: dict = None


def match_labels(assignments, truth_labels) -> dict:
    """Cluster index -> truth label mapping maximising total agreement.

    Solved as an assignment problem on the contingency table. With more
    clusters than labels every label keeps one matched cluster and each
    remaining cluster takes its majority label; the extra "free" columns
    below let one assignment solve both parts jointly, so the optimum does
    not depend on how clusters are numbered.
    """
    pred = np.asarray(assignments)
    truth = list(truth_labels)
    if pred.size == 0 or not truth:
        raise ValueError("cannot match empty labelings")
    if pred.size != len(truth):
        raise ValueError(f"length mismatch: {pred.size} assignments vs {len(truth)} labels")
    clusters = sorted(set(pred.tolist()))
    labels = sorted(set(truth), key=str)
    lab_idx = {lab: i for i, lab in enumerate(labels)}
    table = np.zeros((len(clusters), len(labels)), dtype=np.int64)
    for p, t in zip(pred.tolist(), truth):
        table[clusters.index(p), lab_idx[t]] += 1
    n_free = max(0, len(clusters) - len(labels))
    free = np.repeat(table.max(axis=1, keepdims=True), n_free, axis=1)
    rows, cols = linear_sum_assignment(np.hstack([table, free]), maximize=True)
    mapping = {}
    for r, c in zip(rows, cols):
        col = c if c < len(labels) else int(np.argmax(table[r]))
        mapping[clusters[r]] = labels[col]
    return dict(sorted(mapping.items()))


def agreement(assignments, truth_labels, mapping: dict) -> int:
    return sum(mapping[int(p)] == t for p, t in zip(np.asarray(assignments).tolist(), truth_labels))


def success_rate(assignments, truth_labels, mapping: dict | None = None):
    """Confusion counts, success rate and error rate under the matched mapping.

    With two clusters and two labels the counts are the usual binary ones,
    taking the label matched to the lowest cluster index as positive. In
    the general case every correctly mapped pattern is a TP and every other
    one a FP, so SR is the accuracy either way.
    """
    pred = np.asarray(assignments).tolist()
    truth = list(truth_labels)
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} assignments vs {len(truth)} labels")
    if mapping is None:
        mapping = match_labels(pred, truth)
    mapped = [mapping[int(p)] for p in pred]
    labels = set(truth) | set(mapping.values())
    if len(mapping) == 2 and len(labels) == 2:
        positive = mapping[min(mapping)]
        tp = sum(m == positive and t == positive for m, t in zip(mapped, truth))
        tn = sum(m != positive and t != positive for m, t in zip(mapped, truth))
        fp = sum(m == positive and t != positive for m, t in zip(mapped, truth))
        fn = sum(m != positive and t == positive for m, t in zip(mapped, truth))
        counts = ConfusionCounts(tp, tn, fp, fn)
    else:
        correct = sum(m == t for m, t in zip(mapped, truth))
        counts = ConfusionCounts(correct, 0, len(truth) - correct, 0)
    sr, er = rates(counts)
    return counts, sr, er


def rates(counts: ConfusionCounts) -> tuple[float, float]:
    total = counts.total
    if total == 0:
        raise ValueError("no scored patterns")
    sr = (counts.tp + counts.tn) / total
    return sr, 1.0 - sr


def pairwise_distances(X: np.ndarray, method: ClusterMethod) -> np.ndarray:
    """Symmetric dissimilarity matrix between prepared patterns.

    Squared Euclidean for the euclidean and simple methods; soft-DTW
    divergence for sdtw, because raw soft-DTW values are biased (negative
    self-distance) and would break the silhouette's [-1, 1] range.
    """
    if method.kind == "sdtw":
        return pairwise_divergence(X, method.gamma)
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def silhouette_values(D: np.ndarray, labels) -> np.ndarray:
    """Per-member silhouette from a precomputed distance matrix.

    Singleton clusters score 0.
    """
    labels = np.asarray(labels)
    n = labels.size
    ks = np.unique(labels)
    if ks.size < 2:
        raise ValueError("silhouette undefined for a single cluster")
    sums = np.stack([D[:, labels == j].sum(axis=1) for j in ks], axis=1)
    sizes = np.array([(labels == j).sum() for j in ks])
    own = np.searchsorted(ks, labels)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(n), own] / np.maximum(own_size - 1, 1), 0.0)
    other = sums / sizes[None, :]
    other[np.arange(n), own] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s[own_size == 1] = 0.0
    return np.clip(s, -1.0, 1.0)


def silhouette(dataset, clustering: Clustering, distance: np.ndarray | None = None,
               ids=None) -> SilhouetteReport:
    """Silhouette of every pattern under the clustering's own distance.

    ``distance`` may carry a precomputed matrix from :func:`pairwise_distances`.
    """
    if clustering.k < 2:
        raise ValueError("silhouette undefined for a single cluster")
    if distance is None:
        distance = pairwise_distances(prepare(dataset, clustering.method), clustering.method)
    labels = np.asarray(clustering.assignments)
    if distance.shape != (labels.size, labels.size):
        raise ValueError("distance matrix does not match the clustering")
    vals = silhouette_values(distance, labels)
    if ids is None:
        ids = [getattr(p, "id", "") or str(i) for i, p in enumerate(dataset)]
    return SilhouetteReport(ids=tuple(ids), clusters=tuple(int(v) for v in labels),
                            values=tuple(float(v) for v in vals),
                            mean=float(np.mean(vals)), k=clustering.k)


def cluster_analysis(dataset, k_range, method: ClusterMethod | str = "sdtw", seed: int = 0,
                     n_restarts: int = 8, max_iter: int = 50,
                     bary_max_iter: int = 30) -> ClusterAnalysis:
    """Mean silhouette and objective for every k; best k maximises the mean silhouette."""
    if isinstance(method, str):
        method = ClusterMethod(method)
    ks = sorted(set(int(k) for k in k_range))
    n = len(dataset)
    if not ks or ks[0] < 2 or ks[-1] > n - 1:
        raise ValueError(f"k range must lie within [2, {n - 1}], got {ks}")
    X = prepare(dataset, method)
    D = pairwise_distances(X, method)
    rows, runs = [], {}
    for k in ks:
        c = kmeans(dataset, k, method, seed=seed, n_restarts=n_restarts, max_iter=max_iter,
                   bary_max_iter=bary_max_iter)
        s = float(np.mean(silhouette_values(D, c.assignments)))
        rows.append((k, s, c.objective))
        runs[k] = c
    best = max(rows, key=lambda r: (r[1], -r[0]))[0]
    return ClusterAnalysis(rows=tuple(rows), best_k=best, clusterings=runs)


def flag_outliers(report: SilhouetteReport) -> list:
    """Ids of members with a strictly negative silhouette, most negative first."""
    neg = [(s, i) for i, s in zip(report.ids, report.values) if s < 0]
    return [i for s, i in sorted(neg, key=lambda t: t[0])]


def majority_counts(assignments, truth_labels) -> dict:
    """Per-cluster label histogram, handy for reports."""
    out = {}
    for p, t in zip(np.asarray(assignments).tolist(), truth_labels):
        out.setdefault(int(p), Counter())[t] += 1
    return {k: dict(v) for k, v in sorted(out.items())}
