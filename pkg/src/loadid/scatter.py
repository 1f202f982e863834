"""Fuzzy neighborhood graphs and the within/between-class scatter matrices.

Samples are rows of ``X`` (``n x d``). The within-class scatter is
``X.T @ L1 @ X`` for the Laplacian ``L1`` of a same-class k-NN affinity graph
weighted by fuzzy memberships and a heat kernel; the between-class scatter is
``M @ L2 @ M.T`` for the Laplacian ``L2`` of a class-prior weighted complete
graph over the class means ``M`` (``d x C``).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError

__all__ = [
    "MEMBERSHIP_OWN",
    "MEMBERSHIP_SHARED",
    "NeighborhoodModel",
    "ScatterPair",
    "default_k",
    "knn_indices",
    "fuzzy_memberships",
    "within_scatter",
    "between_scatter",
    "laplacian",
    "neighborhood_model",
    "scatter_pair",
]

logger = logging.getLogger(__name__)

# Keller fuzzy k-NN constants
MEMBERSHIP_OWN = 0.51
MEMBERSHIP_SHARED = 0.49


@dataclass(frozen=True)
class ScatterPair:
    Yw: np.ndarray
    Yb: np.ndarray


@dataclass(frozen=True)
class NeighborhoodModel:
    k: int
    W: np.ndarray
    L1: np.ndarray
    M: np.ndarray
    B: np.ndarray
    L2: np.ndarray
    U: np.ndarray
    classes: np.ndarray
    heat_t: float


def default_k(labels) -> int:
    """``min(7, smallest class size - 1)``, never below 1."""
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return max(1, min(7, int(counts.min()) - 1))


def _check_X(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be a 2-D matrix with samples in rows")
    if not np.all(np.isfinite(X)):
        raise DataError("X contains non-finite values")
    return X


def _knn_from_sqdist(d2: np.ndarray, k: int) -> np.ndarray:
    d2 = d2.copy()
    np.fill_diagonal(d2, np.inf)
    # stable sort: equal distances resolve toward the lower index
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def knn_indices(X, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest rows (Euclidean, self excluded) for each row."""
    X = _check_X(X)
    n = X.shape[0]
    if not 1 <= k <= n - 1:
        raise DataError(f"k must satisfy 1 <= k <= n-1 = {n - 1}, got {k}")
    return _knn_from_sqdist(cdist(X, X, "sqeuclidean"), k)


def _class_index(labels):
    labels = np.asarray(labels, dtype=int)
    classes, inverse = np.unique(labels, return_inverse=True)
    return labels, classes, inverse


def fuzzy_memberships(X, labels, k: int, n_classes: int | None = None) -> np.ndarray:
    """Keller fuzzy k-NN memberships, ``n x C`` with rows summing to one.

    ``U[i, c] = 0.51 + 0.49 * n_ic / k`` for the sample's own class and
    ``0.49 * n_ic / k`` otherwise, ``n_ic`` being the number of the sample's
    ``k`` nearest neighbors labeled ``c``. Columns follow label values
    ``0..n_classes-1`` (default: ``max(labels) + 1``).
    """
    labels = np.asarray(labels, dtype=int)
    nn = knn_indices(X, k)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    n = labels.size
    counts = np.zeros((n, n_classes))
    np.add.at(counts, (np.repeat(np.arange(n), k), labels[nn].ravel()), 1.0)
    U = MEMBERSHIP_SHARED * counts / k
    U[np.arange(n), labels] += MEMBERSHIP_OWN
    return U / U.sum(axis=1, keepdims=True)


def laplacian(A: np.ndarray) -> np.ndarray:
    """``diag(row sums) - A`` for a symmetric affinity matrix."""
    return np.diag(A.sum(axis=1)) - A


def within_scatter(X, labels, U, k: int, heat_t: float | None = None):
    """Same-class fuzzy heat-kernel graph and its scatter ``X.T @ L1 @ X``.

    Each sample is linked to its ``min(k, n_c - 1)`` nearest neighbors of the
    same class ``c``; the edge weight is ``min(U[i, c], U[j, c]) *
    exp(-||x_i - x_j||^2 / t)`` and the graph is symmetrized by elementwise max.
    ``t`` defaults to the mean squared length of the connected pairs.

    Returns
    -------
    W, L1, Yw, t
    """
    X = _check_X(X)
    labels, classes, _ = _class_index(labels)
    U = np.asarray(U, dtype=float)
    n, d = X.shape
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    adj = np.zeros((n, n), dtype=bool)
    d2 = np.zeros((n, n))
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            warnings.warn(f"class {c} has a single sample; it contributes no within-class edges")
            continue
        dc = cdist(X[idx], X[idx], "sqeuclidean")
        d2[np.ix_(idx, idx)] = dc
        nn = _knn_from_sqdist(dc, min(k, idx.size - 1))
        adj[np.repeat(idx, nn.shape[1]), idx[nn].ravel()] = True
    adj |= adj.T
    if heat_t is None:
        pairs = d2[np.triu(adj, 1)]
        heat_t = float(pairs.mean()) if pairs.size else 1.0
        if heat_t <= 0:
            heat_t = 1.0
    # edges only join same-class samples, so U[i, c] and U[j, c] are own-class memberships
    own = U[np.arange(n), labels]
    W = np.where(adj, np.minimum.outer(own, own) * np.exp(-d2 / heat_t), 0.0)
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    L1 = laplacian(W)
    Yw = X.T @ L1 @ X
    return W, L1, 0.5 * (Yw + Yw.T), heat_t


def between_scatter(X, labels):
    """Class means and the class-prior weighted between-class scatter.

    ``B[p, q] = n_p * n_q / n**2`` for ``p != q``, so ``M @ L2 @ M.T`` equals
    the classical ``sum_c n_c (m_c - m)(m_c - m).T`` divided by ``n``.

    Returns
    -------
    M, B, L2, Yb
    """
    X = _check_X(X)
    labels, classes, inverse = _class_index(labels)
    if classes.size < 2:
        raise DataError("between-class scatter needs at least 2 classes")
    counts = np.bincount(inverse).astype(float)
    sums = np.zeros((classes.size, X.shape[1]))
    np.add.at(sums, inverse, X)
    M = (sums / counts[:, None]).T
    n = float(labels.size)
    B = np.outer(counts, counts) / (n * n)
    np.fill_diagonal(B, 0.0)
    L2 = np.diag(B.sum(axis=0)) - B
    Yb = M @ L2 @ M.T
    return M, B, L2, 0.5 * (Yb + Yb.T)


def neighborhood_model(X, labels, k: int | None = None) -> NeighborhoodModel:
    X = _check_X(X)
    labels = np.asarray(labels, dtype=int)
    if k is None:
        k = default_k(labels)
    U = fuzzy_memberships(X, labels, k)
    W, L1, _, t = within_scatter(X, labels, U, k)
    M, B, L2, _ = between_scatter(X, labels)
    return NeighborhoodModel(k, W, L1, M, B, L2, U, np.unique(labels), t)


def scatter_pair(X, labels, k: int | None = None) -> tuple[ScatterPair, NeighborhoodModel]:
    """Both scatter matrices plus the neighborhood structure they came from."""
    X = _check_X(X)
    model = neighborhood_model(X, labels, k)
    Yw = X.T @ model.L1 @ X
    Yb = model.M @ model.L2 @ model.M.T
    logger.debug("scatter: k=%d heat_t=%g tr(Yw)=%g tr(Yb)=%g", model.k, model.heat_t,
                 np.trace(Yw), np.trace(Yb))
    return ScatterPair(0.5 * (Yw + Yw.T), 0.5 * (Yb + Yb.T)), model
