import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import normalized_mutual_info_score

from heatup.errors import DegenerateInputError
from heatup.evaluation import (EmbeddingSet, EvalReport, compactness_report, evaluate, kmeans,
                               nmi, normalize_for_eval, recall_at_k)
from heatup.numerics import Rng
from oracles import brute_nmi, brute_recall


def test_normalize_examples():
    es = normalize_for_eval(EmbeddingSet([[3.0, 4.0], [0.0, 1.0]], [0, 1]))
    np.testing.assert_allclose(es.embeddings, [[0.6, 0.8], [0.0, 1.0]])
    assert es.normalized
    again = normalize_for_eval(es)
    np.testing.assert_array_equal(again.embeddings, es.embeddings)
    with pytest.raises(DegenerateInputError):
        normalize_for_eval(EmbeddingSet([[1.0, 0.0], [0.0, 0.0]], [0, 1]))


def test_label_length_checked():
    with pytest.raises(ValueError):
        EmbeddingSet(np.zeros((3, 2)), [0, 1])


def test_kmeans_pairs():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    res = kmeans(x, 2, Rng(0))
    assert res.assignment[0] == res.assignment[1] != res.assignment[2] == res.assignment[3]
    assert res.inertia == pytest.approx(4 * 0.25)


def test_kmeans_every_point_own_cluster():
    x = np.random.default_rng(0).normal(size=(7, 3))
    res = kmeans(x, 7, Rng(1))
    assert len(set(res.assignment.tolist())) == 7
    assert res.inertia == 0.0


def test_kmeans_argument_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 2, max_iters=0)


def test_kmeans_recovers_tight_gaussians():
    centers = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    ok = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        truth = np.repeat(np.arange(3), 10)
        x = centers[truth] + rng.normal(0, 0.01, size=(30, 2))
        res = kmeans(x, 3, Rng(seed))
        ok += nmi(res.assignment, truth) == 1.0
    assert ok >= 95


@pytest.mark.parametrize("seed", range(50))
def test_kmeans_inertia_never_increases(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(rng.integers(5, 40), 3))
    res = kmeans(x, int(rng.integers(1, 5)), Rng(seed), max_iters=50)
    assert np.all(np.diff(res.inertia_history) <= 1e-12)


def test_kmeans_reseeds_empty_cluster():
    # duplicated points force coincident seeds; all clusters must still be used
    x = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]] * 5 + [[5.0, 5.0]])
    res = kmeans(x, 3, Rng(0))
    assert len(set(res.assignment.tolist())) == 3


def test_nmi_examples():
    assert nmi([2, 2, 0, 0, 1], [0, 0, 1, 1, 2]) == 1.0
    assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0
    assert nmi([3, 3, 3], [1, 1, 1]) == 1.0
    # 2 ln2 / (ln2 + 1.5 ln2)
    assert nmi([0, 0, 1, 1], [0, 0, 1, 2]) == pytest.approx(0.8, abs=1e-12)
    with pytest.raises(ValueError):
        nmi([0, 1], [0, 1, 2])


@pytest.mark.parametrize("seed", range(50))
def test_nmi_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 41))
    a = rng.integers(0, rng.integers(1, 6), size=n)
    b = rng.integers(0, rng.integers(1, 6), size=n)
    assert abs(nmi(a, b) - brute_nmi(a.tolist(), b.tolist())) < 1e-12
    if len(set(a)) > 1 and len(set(b)) > 1:
        assert abs(nmi(a, b) - normalized_mutual_info_score(b, a)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=30), st.randoms(use_true_random=False))
def test_nmi_symmetric_and_relabel_invariant(labels, rnd):
    other = labels[:]
    rnd.shuffle(other)
    perm = list(range(5))
    rnd.shuffle(perm)
    renamed = [perm[v] for v in other]
    assert abs(nmi(labels, other) - nmi(other, labels)) < 1e-12
    assert abs(nmi(labels, other) - nmi(labels, renamed)) < 1e-12
    assert 0.0 <= nmi(labels, other) <= 1.0


def test_recall_hand_instance():
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [1.0, 0.0], [1.0, 0.2], [0.0, 1.0], [0.6, 0.0]])
    labels = np.array([0, 1, 1, 0, 2, 0])
    got = recall_at_k(EmbeddingSet(pts, labels), [1, 2, 3])
    # ranked neighbours: 0: 1,5,2  1: 0,5,2  2: 3,5,1  3: 2,5,1  4: 0,1,5  5: 2,3,1
    assert got == {1: 0.0, 2: 0.5, 3: 5 / 6}
    assert got == brute_recall(pts, labels, [1, 2, 3])


def test_recall_ties_use_lower_index():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    assert recall_at_k(EmbeddingSet(pts, [0, 1, 0]), [1])[1] == pytest.approx(1 / 3)
    assert recall_at_k(EmbeddingSet(pts, [0, 0, 1]), [1])[1] == pytest.approx(2 / 3)


def test_recall_exhaustive_and_singletons():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 3))
    assert recall_at_k(EmbeddingSet(x, [0, 0, 1, 1, 2, 2, 3, 3]), [7])[7] == 1.0
    r = recall_at_k(EmbeddingSet(x, [0, 0, 1, 1, 2, 2, 3, 9]), [1, 7])
    assert r[7] == pytest.approx(6 / 8)


def test_recall_k_too_large():
    with pytest.raises(ValueError):
        recall_at_k(EmbeddingSet(np.eye(3), [0, 1, 2]), [3])


@pytest.mark.parametrize("seed", range(50))
def test_recall_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 41))
    x = rng.normal(size=(n, 3))
    labels = rng.integers(0, 4, size=n)
    ks = [1, 2, 4]
    got = recall_at_k(EmbeddingSet(x, labels), ks)
    assert got == brute_recall(x, labels, ks)
    assert got[1] <= got[2] <= got[4]


def test_recall_with_gallery():
    q = EmbeddingSet([[1.0, 0.0]], [0])
    g = EmbeddingSet([[0.9, 0.1], [1.0, 0.0], [0.0, 1.0]], [1, 0, 0])
    assert recall_at_k(q, [1, 2], gallery=g) == {1: 1.0, 2: 1.0}


def test_compactness_examples():
    es = EmbeddingSet([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]], [0, 0, 1, 1])
    intra, inter, excluded = compactness_report(es)
    assert (intra, inter, excluded) == (1.0, -1.0, 0)


def test_compactness_hand_three_classes():
    s = math.sqrt(0.5)
    x = np.array([[1, 0, 0], [s, s, 0], [0, 1, 0], [0, s, s], [0, 0, 1], [1, 0, 0.0]])
    labels = [0, 0, 1, 1, 2, 2]
    intra, inter, _ = compactness_report(EmbeddingSet(x, labels))
    assert intra == pytest.approx((s + s + 0.0) / 3)
    means = np.array([x[0] + x[1], x[2] + x[3], x[4] + x[5]])
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    g = means @ means.T
    assert inter == pytest.approx((g[0, 1] + g[0, 2] + g[1, 2]) / 3)


def test_compactness_excludes_singletons():
    intra, _, excluded = compactness_report(EmbeddingSet(np.eye(3), [0, 0, 1]))
    assert excluded == 1 and intra == 0.0


def test_perfect_embedding_report():
    x = np.repeat(np.eye(4), 3, axis=0)
    report = evaluate(EmbeddingSet(x, np.repeat(np.arange(4), 3)), ks=(1, 2))
    assert report.nmi == 1.0 and report.recall == {1: 1.0, 2: 1.0}
    assert report.n_clusters == 4
    assert EvalReport.from_dict(report.to_dict()) == report
    assert list(report.to_dict()) == ["nmi", "recall", "intra_cosine", "inter_cosine", "n_clusters"]


def test_evaluate_deterministic():
    rng = np.random.default_rng(0)
    es = EmbeddingSet(rng.normal(size=(40, 5)), rng.integers(0, 4, 40))
    assert evaluate(es, rng=Rng(3)).to_json() == evaluate(es, rng=Rng(3)).to_json()
