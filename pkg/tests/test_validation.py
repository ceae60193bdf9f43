import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import silhouette_samples

from demandclust.clustering import ClusterMethod, Clustering, kmeans
from demandclust.validation import (ConfusionCounts, SilhouetteReport, agreement,
                                    cluster_analysis, flag_outliers, majority_counts,
                                    match_labels, pairwise_distances, rates, silhouette,
                                    silhouette_values, success_rate)

EUCLID_RAW = ClusterMethod("euclidean", normalize_input=False)


def stub(labels, method=EUCLID_RAW):
    labels = np.asarray(labels)
    return Clustering(k=int(labels.max()) + 1, assignments=labels, centers=np.empty((0, 0)),
                      objective=0.0, n_iter=0, seed=0, method=method)


def test_match_labels_examples():
    assert match_labels([0, 0, 1, 1], list("AABB")) == {0: "A", 1: "B"}
    assert match_labels([1, 1, 0, 0], list("AABB")) == {1: "A", 0: "B"}
    assert match_labels([0, 0, 1, 1], list("AAAB")) == {0: "A", 1: "B"}


def test_match_labels_errors():
    with pytest.raises(ValueError):
        match_labels([], [])
    with pytest.raises(ValueError):
        match_labels([0, 1], ["A"])


def test_match_labels_extra_clusters_take_majority():
    m = match_labels([0, 0, 1, 1, 2, 2, 2], list("AABBBBA"))
    assert sorted(m.values()).count("B") == 2 and m[0] == "A"


@given(st.lists(st.integers(0, 3), min_size=4, max_size=14),
       st.lists(st.sampled_from("WXYZ"), min_size=14, max_size=14))
def test_match_labels_optimal_by_enumeration(pred, truth):
    truth = truth[: len(pred)]
    m = match_labels(pred, truth)
    best = agreement(pred, truth, m)
    clusters = sorted(set(pred))
    labels = sorted(set(truth))
    for perm in itertools.permutations(labels, min(len(labels), len(clusters))):
        for cl in itertools.permutations(clusters, len(perm)):
            cand = dict(zip(cl, perm))
            cand.update({c: m[c] for c in clusters if c not in cand})
            assert agreement(pred, truth, cand) <= best


def test_success_rate_arithmetic_82_percent():
    sr, er = rates(ConfusionCounts(tp=41, tn=41, fp=9, fn=9))
    assert sr == 0.82 and sr + er == 1.0


def test_success_rate_examples():
    counts, sr, er = success_rate([0, 0, 1, 1], list("AABB"))
    assert (sr, er) == (1.0, 0.0) and counts == ConfusionCounts(2, 2, 0, 0)
    counts, sr, er = success_rate([0, 0, 1, 1], list("AAAB"))
    assert sr == 0.75 and counts.total == 4
    with pytest.raises(ValueError):
        success_rate([0, 1], ["A"])


def test_success_rate_multiclass_is_accuracy():
    counts, sr, er = success_rate([0, 0, 1, 1, 2, 2], list("AABBCA"))
    assert counts == ConfusionCounts(5, 0, 1, 0) and sr == 5 / 6 and sr + er == 1.0


@given(st.lists(st.integers(0, 2), min_size=2, max_size=30), st.randoms())
def test_success_rate_invariances(pred, rnd):
    truth = [rnd.choice("ab") for _ in pred]
    _, sr, er = success_rate(pred, truth)
    assert sr + er == 1.0
    perm = rnd.sample(range(3), 3)
    _, sr_p, _ = success_rate([perm[p] for p in pred], truth)
    _, sr_t, _ = success_rate(pred, [{"a": "q", "b": "r"}[t] for t in truth])
    assert sr_p == sr and sr_t == sr


def test_silhouette_hand_example():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    rep = silhouette(list(X), stub([0, 0, 1, 1]))
    assert rep.values[0] == pytest.approx(109.5 / 110.5, abs=1e-15)
    assert rep.mean == np.mean(rep.values)


def test_silhouette_identical_clusters_zero():
    X = np.full((4, 3), 0.25)
    rep = silhouette(list(X), stub([0, 0, 1, 1]))
    assert rep.values == (0.0, 0.0, 0.0, 0.0)


def test_silhouette_singleton_zero():
    X = np.array([[0.0], [0.2], [5.0]])
    rep = silhouette(list(X), stub([0, 0, 1]))
    assert rep.values[2] == 0.0


def test_silhouette_single_cluster_rejected():
    c = Clustering(k=1, assignments=np.zeros(3, int), centers=np.zeros((1, 1)), objective=0.0,
                   n_iter=0, seed=0, method=EUCLID_RAW)
    with pytest.raises(ValueError, match="silhouette undefined for a single cluster"):
        silhouette([np.zeros(1)] * 3, c)


@given(st.integers(0, 10_000), st.integers(2, 5))
def test_silhouette_matches_sklearn(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.random((16, 3))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, 16 - k)])
    D = pairwise_distances(X, EUCLID_RAW)
    ours = silhouette_values(D, labels)
    ref = silhouette_samples(D, labels, metric="precomputed")
    np.testing.assert_allclose(ours, ref, atol=1e-12)
    assert np.all((ours >= -1) & (ours <= 1))
    np.testing.assert_allclose(silhouette_values(3.7 * D, labels), ours, atol=1e-12)


def test_sdtw_silhouette_uses_divergence():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.random((4, 8)) * 0.2, 0.8 + rng.random((4, 8)) * 0.2])
    D = pairwise_distances(X, ClusterMethod("sdtw"))
    assert np.all(np.diag(D) == 0) and np.all(D >= 0)
    rep = silhouette(list(X), stub([0] * 4 + [1] * 4, ClusterMethod("sdtw", normalize_input=False)))
    assert min(rep.values) > 0.5


def test_flag_outliers():
    rep = SilhouetteReport(ids=("a", "b", "c", "d"), clusters=(0, 0, 1, 1),
                           values=(0.5, -0.1, 0.0, -0.3), mean=0.025, k=2)
    assert flag_outliers(rep) == ["d", "b"]
    none = SilhouetteReport(ids=("a",), clusters=(0,), values=(0.0,), mean=0.0, k=2)
    assert flag_outliers(none) == []


def test_cluster_analysis_separated_groups():
    rng = np.random.default_rng(1)
    X = np.vstack([np.full((5, 4), c) + rng.normal(0, 1e-3, (5, 4)) for c in (0, 3, 6)])
    res = cluster_analysis(list(X), range(2, 6), EUCLID_RAW, n_restarts=4)
    assert res.best_k == 3
    assert [r[0] for r in res.rows] == [2, 3, 4, 5]
    assert set(res.clusterings) == {2, 3, 4, 5}


def test_cluster_analysis_blob_has_no_structure():
    rng = np.random.default_rng(0)
    day = np.sin(np.linspace(0, 2 * np.pi, 48))
    X = day + rng.normal(0, 1.0, (60, 48))
    res = cluster_analysis(list(X), range(2, 7), EUCLID_RAW, n_restarts=4)
    assert all(s < 0.3 for _, s, _ in res.rows)


def test_cluster_analysis_tie_prefers_small_k():
    X = [np.zeros(2)] * 2 + [np.ones(2)] * 2 + [np.full(2, 2.0)] * 2
    res = cluster_analysis(X, [2, 3], EUCLID_RAW, n_restarts=2)
    assert res.best_k in (2, 3)
    values = dict((k, s) for k, s, _ in res.rows)
    if values[2] == values[3]:
        assert res.best_k == 2


def test_cluster_analysis_invalid_range():
    X = [np.array([float(i)]) for i in range(5)]
    with pytest.raises(ValueError):
        cluster_analysis(X, [1, 2], EUCLID_RAW)
    with pytest.raises(ValueError):
        cluster_analysis(X, [2, 5], EUCLID_RAW)
    with pytest.raises(ValueError):
        cluster_analysis(X, [], EUCLID_RAW)


def test_majority_counts():
    assert majority_counts([0, 0, 1], ["a", "b", "b"]) == {0: {"a": 1, "b": 1}, 1: {"b": 1}}


def test_report_per_member():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    c = kmeans(list(X), 2, EUCLID_RAW, n_restarts=1)
    rep = silhouette(list(X), c, ids=list("wxyz"))
    assert [m[0] for m in rep.per_member] == list("wxyz") and rep.k == 2
