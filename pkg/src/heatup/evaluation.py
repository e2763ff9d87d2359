"""Clustering and retrieval evaluation of embedding sets.

Embeddings are L2-normalized before any metric is computed. Clustering uses
k-means with as many clusters as test classes, scored by NMI against the
labels; retrieval uses Recall@K under Euclidean distance.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError
from .numerics import DTYPE, Rng


@dataclass
class EmbeddingSet:
    embeddings: np.ndarray
    labels: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=DTYPE)
        if self.embeddings.ndim == 1:
            self.embeddings = self.embeddings.reshape(0 if self.embeddings.size == 0 else 1, -1)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.embeddings.shape[0],):
            raise ValueError(f"{self.embeddings.shape[0]} embeddings but {self.labels.shape} labels")

    def __len__(self):
        return self.embeddings.shape[0]


def normalize_for_eval(es, epsilon=1e-12):
    norms = np.sqrt((es.embeddings ** 2).sum(axis=1))
    bad = np.flatnonzero(~(norms > epsilon))
    if bad.size:
        raise DegenerateInputError(f"embedding row {bad[0]} has zero norm", row=int(bad[0]))
    return EmbeddingSet(es.embeddings / norms[:, None], es.labels, True)


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    assignment: np.ndarray
    inertia: float
    centers: np.ndarray
    n_iter: int
    inertia_history: list = field(default_factory=list)


def _sq_dists(x, centers):
    d = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d


def kmeans_pp_init(x, n_clusters, rng):
    n = x.shape[0]
    centers = [x[int(rng.integers(n))]]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, n_clusters):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a chosen center; pick unused indices
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(x, centers, max_iters):
    history = []
    assignment = None
    for it in range(1, max_iters + 1):
        d = _sq_dists(x, centers)
        new_assignment = d.argmin(axis=1)
        inertia = float(d[np.arange(x.shape[0]), new_assignment].sum())
        history.append(inertia)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            return assignment, inertia, centers, it, history
        assignment = new_assignment
        centers = centers.copy()
        dist_own = d[np.arange(x.shape[0]), assignment]
        for c in range(centers.shape[0]):
            members = assignment == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its center
                far = int(dist_own.argmax())
                centers[c] = x[far]
                assignment[far] = c
                dist_own[far] = 0.0
    d = _sq_dists(x, centers)
    assignment = d.argmin(axis=1)
    inertia = float(d[np.arange(x.shape[0]), assignment].sum())
    history.append(inertia)
    return assignment, inertia, centers, max_iters, history


def kmeans(x, n_clusters, rng=None, max_iters=300, n_init=1):
    """k-means++ seeding followed by Lloyd iterations.

    Iterates until the assignment stops changing or ``max_iters`` is hit.
    With ``n_init > 1`` the run with the lowest inertia is kept.
    """
    if isinstance(x, EmbeddingSet):
        x = x.embeddings
    x = np.asarray(x, dtype=DTYPE)
    n = x.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must lie in [1, {n}], got {n_clusters}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    rng = rng if rng is not None else Rng(0)
    best = None
    for _ in range(n_init):
        centers = kmeans_pp_init(x, n_clusters, rng)
        result = KMeansResult(*_lloyd(x, centers, max_iters))
        if best is None or result.inertia < best.inertia:
            best = result
    return best


# ---------------------------------------------------------------------------
# NMI


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(assignment, labels):
    """Normalized mutual information ``2 I(C; L) / (H(C) + H(L))``.

    Returns 1 when both partitions are a single block and 0 when exactly one
    of them is.
    """
    a = np.asarray(assignment)
    b = np.asarray(labels)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"assignment and labels differ in shape: {a.shape} vs {b.shape}")
    n = a.size
    if n == 0:
        raise ValueError("nmi of empty partitions is undefined")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    h_a = _entropy(joint.sum(axis=1), n)
    h_b = _entropy(joint.sum(axis=0), n)
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    nz = joint > 0
    if np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1):
        return 1.0  # identical partitions up to relabeling
    pa = joint.sum(axis=1) / n
    pb = joint.sum(axis=0) / n
    pj = joint[nz] / n
    mi = float((pj * np.log(pj / np.outer(pa, pb)[nz])).sum())
    return min(1.0, max(0.0, 2.0 * mi / (h_a + h_b)))


# ---------------------------------------------------------------------------
# Recall@K


def _ranked_neighbors(queries, pool, max_k, exclude_self, chunk=None):
    n_q = queries.shape[0]
    k = queries.shape[1] if queries.ndim == 2 else 0
    if chunk is None:
        chunk = max(1, int(4_000_000 // max(1, pool.shape[0] * max(k, 1))))
    out = np.empty((n_q, max_k), dtype=np.int64)
    for start in range(0, n_q, chunk):
        q = queries[start:start + chunk]
        d = ((q[:, None, :] - pool[None, :, :]) ** 2).sum(axis=2)
        if exclude_self:
            rows = np.arange(q.shape[0])
            d[rows, start + rows] = np.inf
        # stable sort: equal distances keep ascending pool index
        out[start:start + q.shape[0]] = np.argsort(d, axis=1, kind="stable")[:, :max_k]
    return out


def recall_at_k(es, ks, gallery=None):
    """Mean hit rate of same-class items among the K nearest neighbours.

    Without a gallery each query searches the rest of its own set. Returns
    ``{K: recall}``.
    """
    ks = sorted({int(k) for k in ks})
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive integers, got {ks}")
    pool = gallery if gallery is not None else es
    pool_size = len(pool)
    if ks[-1] >= pool_size:
        raise ValueError(f"K={ks[-1]} must be smaller than the search pool size {pool_size}")
    if len(es) == 0:
        return {k: 0.0 for k in ks}
    nbrs = _ranked_neighbors(es.embeddings, pool.embeddings, ks[-1], gallery is None)
    hits = pool.labels[nbrs] == es.labels[:, None]
    first_hit = np.where(hits.any(axis=1), hits.argmax(axis=1), ks[-1])
    return {k: float((first_hit < k).mean()) for k in ks}


# ---------------------------------------------------------------------------
# Compactness


def compactness_report(es):
    """Mean intra-class cosine and mean cosine between class-mean directions.

    Returns ``(intra, inter, n_excluded)`` where ``n_excluded`` counts classes
    with fewer than two members, which do not enter the intra term.
    """
    x = es.embeddings
    norms = np.sqrt((x * x).sum(axis=1))
    u = x / np.where(norms > 0, norms, 1.0)[:, None]
    classes = np.unique(es.labels)
    intra, means, excluded = [], [], 0
    for c in classes:
        uc = u[es.labels == c]
        s = uc.sum(axis=0)
        means.append(s)
        m = uc.shape[0]
        if m < 2:
            excluded += 1
            continue
        # sum over i != j of u_i . u_j == ||sum u||^2 - sum ||u_i||^2
        pair_sum = float(s @ s - (uc * uc).sum())
        intra.append(pair_sum / (m * (m - 1)))
    inter = math.nan
    if len(means) >= 2:
        means = np.array(means)
        mn = np.sqrt((means * means).sum(axis=1))
        means = means / np.where(mn > 0, mn, 1.0)[:, None]
        g = means @ means.T
        iu = np.triu_indices(len(means), 1)
        inter = float(g[iu].mean())
    return (float(np.mean(intra)) if intra else math.nan), inter, excluded


@dataclass
class EvalReport:
    nmi: float
    recall: dict
    intra_cosine: float
    inter_cosine: float
    n_clusters: int

    def to_dict(self):
        return {
            "nmi": self.nmi,
            "recall": {str(k): self.recall[k] for k in sorted(self.recall)},
            "intra_cosine": self.intra_cosine,
            "inter_cosine": self.inter_cosine,
            "n_clusters": self.n_clusters,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(d["nmi"], {int(k): v for k, v in d["recall"].items()},
                   d["intra_cosine"], d["inter_cosine"], d["n_clusters"])

    def table(self):
        lines = [f"{'metric':<14}{'value':>10}", f"{'NMI':<14}{self.nmi:>10.4f}"]
        for k in sorted(self.recall):
            lines.append(f"{'R@' + str(k):<14}{self.recall[k]:>10.4f}")
        lines.append(f"{'intra cosine':<14}{self.intra_cosine:>10.4f}")
        lines.append(f"{'inter cosine':<14}{self.inter_cosine:>10.4f}")
        return "\n".join(lines)


def evaluate(es, ks=(1, 2, 4, 8), rng=None, n_init=1, max_iters=300):
    """Full evaluation: normalize, cluster, score NMI, Recall@K and compactness."""
    es = normalize_for_eval(es)
    n_clusters = int(np.unique(es.labels).size)
    km = kmeans(es.embeddings, n_clusters, rng if rng is not None else Rng(0), max_iters, n_init)
    intra, inter, _ = compactness_report(es)
    return EvalReport(nmi(km.assignment, es.labels), recall_at_k(es, ks), intra, inter, n_clusters)
