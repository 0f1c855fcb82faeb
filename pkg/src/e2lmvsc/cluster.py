"""Pseudo-labels, k-means, spectral clustering, label matching and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg

from .errors import LengthMismatch, ShapeMismatch
from .numcore.linalg import check_symmetric, sym_eig_smallest
from .numcore.rng import RngStream

DEGREE_EPS = 1e-8
DENSE_EIG_MAX_N = 3000
# below this many K-partitions, k-means enumerates them and returns the exact optimum
EXACT_KMEANS_MAX_PARTITIONS = 4096


@dataclass(frozen=True)
class PartitionLabels:
    labels: np.ndarray
    K: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", lab)
        if lab.size and (lab.min() < 0 or lab.max() >= self.K):
            raise ValueError(f"labels outside [0, {self.K})")

    def mask(self, k):
        return self.labels == k

    def counts(self):
        return np.bincount(self.labels, minlength=self.K)


@dataclass(frozen=True)
class ClusterMetrics:
    acc: float
    nmi: float
    pur: float
    fscore: float

    def as_dict(self, digits=6):
        return {k: round(float(getattr(self, k)), digits) for k in ("acc", "nmi", "pur", "fscore")}


def pseudo_labels(Q) -> PartitionLabels:
    """Row-wise argmax of a soft assignment matrix; ties go to the lowest index."""
    Q = np.asarray(Q, dtype=np.float64)
    return PartitionLabels(np.argmax(Q, axis=1), Q.shape[1])


# -- k-means -------------------------------------------------------------------

def _sq_dists(X, centers):
    # explicit differences keep the result exact for coincident points
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp(X, K, rng: RngStream):
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(0, n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(0, n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[k] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[k : k + 1])[:, 0])
    return centers


def _lloyd(X, centers, max_iter, tol):
    K = centers.shape[0]
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        labels = np.argmin(d2, axis=1)
        new = centers.copy()
        counts = np.bincount(labels, minlength=K)
        for k in range(K):
            if counts[k]:
                new[k] = X[labels == k].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # reseed each empty cluster at the point farthest from its centroid
            far = d2[np.arange(X.shape[0]), labels].copy()
            for k in empty:
                i = int(np.argmax(far))
                new[k] = X[i]
                far[i] = -1.0
        shift = np.sqrt(np.sum((new - centers) ** 2, axis=1)).max()
        centers = new
        if shift < tol and not empty.size:
            break
    d2 = _sq_dists(X, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(X.shape[0]), labels].sum())
    return labels, centers, inertia


def kmeans_objective(X, labels):
    X = np.asarray(X, dtype=np.float64)
    total = 0.0
    for k in np.unique(labels):
        pts = X[labels == k]
        total += float(np.sum((pts - pts.mean(axis=0)) ** 2))
    return total


def _stirling2(n, K):
    row = [1] + [0] * K
    for i in range(1, n + 1):
        for k in range(min(i, K), 0, -1):
            row[k] = k * row[k] + row[k - 1]
        row[0] = 0
    return row[K]


def _partitions(n, K):
    """Every labeling of n points into exactly K non-empty clusters, once each.

    Restricted growth strings: point i may open cluster max(labels[:i]) + 1.
    """
    labels = [0] * n

    def grow(i, used):
        if n - i < K - used:
            return
        if i == n:
            yield np.array(labels)
            return
        for k in range(min(used + 1, K)):
            labels[i] = k
            yield from grow(i + 1, max(used, k + 1))

    yield from grow(1, 1)


def _kmeans_exact(X, K):
    sq = float(np.sum(X * X))
    best, best_cost = None, np.inf
    for labels in _partitions(X.shape[0], K):
        sums = np.zeros((K, X.shape[1]))
        np.add.at(sums, labels, X)
        counts = np.bincount(labels, minlength=K)
        cost = sq - float(np.sum(np.sum(sums * sums, axis=1) / counts))
        if cost < best_cost:
            best, best_cost = labels, cost
    return best


def kmeans(X, K, restarts=10, max_iter=300, tol=1e-6, rng=None) -> PartitionLabels:
    """k-means++ seeded Lloyd iterations; best of ``restarts`` by inertia.

    Restart ``r`` draws from sub-stream ``r`` of ``rng`` so results depend
    only on the stream key, and ties keep the earliest restart. Inputs small
    enough to enumerate every K-partition are solved exactly instead.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch("kmeans expects an n x d array")
    n = X.shape[0]
    if n < K:
        raise ValueError(f"need at least K={K} points, got {n}")
    if K >= 1 and _stirling2(n, K) <= EXACT_KMEANS_MAX_PARTITIONS:
        return PartitionLabels(_kmeans_exact(X, K), K)
    rng = rng if rng is not None else RngStream(0)
    best = None
    for r in range(restarts):
        sub = rng.substream(rng.stream_id * 1000 + r + 1)
        labels, _, inertia = _lloyd(X, _kmeans_pp(X, K, sub), max_iter, tol)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    return PartitionLabels(best[0], K)


# -- spectral clustering ---------------------------------------------------------

def spectral_embedding(S, K):
    """Row-normalized eigenvectors of the normalized Laplacian of |S|."""
    S = check_symmetric(S, name="affinity")
    n = S.shape[0]
    A = np.abs(S)
    A = 0.5 * (A + A.T)
    deg = A.sum(axis=1) + DEGREE_EPS
    inv_sqrt = 1.0 / np.sqrt(deg)
    M = A * inv_sqrt[:, None] * inv_sqrt[None, :]
    if n <= DENSE_EIG_MAX_N:
        L = np.eye(n) - M
        _, E = sym_eig_smallest(L, K)
    else:
        # smallest eigenpairs of I - M are the largest of M
        _, E = scipy.sparse.linalg.eigsh(M, k=K, which="LA", v0=np.ones(n))
        E = E[:, ::-1]
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    return np.where(norms > 0, E / np.where(norms > 0, norms, 1.0), 0.0)


def spectral_cluster(S, K, rng=None, restarts=10, max_iter=300, tol=1e-6) -> PartitionLabels:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeMismatch(f"affinity must be square, got {S.shape}")
    n = S.shape[0]
    if K == 1:
        return PartitionLabels(np.zeros(n, dtype=np.int64), 1)
    E = spectral_embedding(S, K)
    return kmeans(E, K, restarts=restarts, max_iter=max_iter, tol=tol, rng=rng)


# -- assignment ----------------------------------------------------------------

def hungarian(cost):
    """Minimum-cost perfect assignment of a square cost matrix.

    Returns ``(assignment, total)`` where row ``i`` is matched to column
    ``assignment[i]``. Shortest augmenting paths with dual potentials, O(K^3).
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ShapeMismatch(f"cost must be square, got {C.shape}")
    n = C.shape[0]
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match_col = np.zeros(n + 1, dtype=np.int64)  # match_col[j] = row matched to column j (1-based)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            delta, j1 = INF, -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = C[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[match_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    assignment = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assignment[match_col[j] - 1] = j - 1
    total = float(C[np.arange(n), assignment].sum())
    return assignment, total


# -- metrics -------------------------------------------------------------------

def _check_pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {truth.size} ground-truth labels")
    if pred.size == 0:
        raise LengthMismatch("empty labelings")
    return pred, truth


def contingency(pred, truth):
    pred, truth = _check_pair(pred, truth)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def metric_acc(pred, truth) -> float:
    table = contingency(pred, truth)
    size = max(table.shape)
    square = np.zeros((size, size))
    square[: table.shape[0], : table.shape[1]] = table
    assignment, _ = hungarian(-square)
    matched = square[np.arange(size), assignment].sum()
    return float(matched / table.sum())


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def metric_nmi(pred, truth) -> float:
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1), n)
    h_truth = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 or h_truth == 0.0:
        return 1.0 if h_pred == h_truth else 0.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(min(1.0, max(0.0, mi / np.sqrt(h_pred * h_truth))))


def metric_purity(pred, truth) -> float:
    table = contingency(pred, truth)
    return float(table.max(axis=1).sum() / table.sum())


def metric_fscore(pred, truth) -> float:
    """Pairwise F-measure over all unordered sample pairs."""
    table = contingency(pred, truth).astype(np.float64)
    pairs = lambda c: float(np.sum(c * (c - 1) / 2.0))  # noqa: E731
    tp = pairs(table)
    same_pred = pairs(table.sum(axis=1))
    same_truth = pairs(table.sum(axis=0))
    # no predicted (true) positive pairs means no false positives (negatives)
    precision = tp / same_pred if same_pred else 1.0
    recall = tp / same_truth if same_truth else 1.0
    if precision + recall == 0.0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def evaluate_labels(pred, truth) -> ClusterMetrics:
    return ClusterMetrics(
        acc=metric_acc(pred, truth),
        nmi=metric_nmi(pred, truth),
        pur=metric_purity(pred, truth),
        fscore=metric_fscore(pred, truth),
    )
