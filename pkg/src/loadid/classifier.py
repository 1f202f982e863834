"""CART trees, bootstrap-aggregated tree ensembles and a k-NN baseline.

Trees are grown best-first: the leaf whose best Gini split yields the largest
total impurity decrease is split next, so ``max_splits`` caps the number of
internal nodes rather than the depth. Samples go left iff
``x[feature] < threshold``.
"""

from __future__ import annotations

import heapq
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError

__all__ = [
    "TIE_TOL",
    "DecisionTree",
    "BaggedEnsemble",
    "KNNClassifier",
    "gini",
    "best_split",
    "fit_tree",
    "predict_tree",
    "bootstrap_sample",
    "fit_bdt",
    "predict_bdt",
    "majority_vote",
    "oob_accuracy",
    "ensemble_summary",
    "fit_knn",
    "predict_knn",
    "resolve_threads",
]

# impurities closer than this are treated as equal when breaking ties
TIE_TOL = 1e-12
BDT_LEARNERS = 30
BDT_MAX_SPLITS = 42000


def resolve_threads(n_jobs: int | None = None) -> int:
    """Thread count from ``n_jobs`` or ``LOADID_THREADS`` (0 or unset = all cores)."""
    if n_jobs is None:
        try:
            n_jobs = int(os.environ.get("LOADID_THREADS", "0"))
        except ValueError:
            n_jobs = 0
    if n_jobs <= 0:
        n_jobs = os.cpu_count() or 1
    return n_jobs


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _check_Xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("X must be a non-empty 2-D matrix")
    if y.shape != (X.shape[0],):
        raise DataError("y must have one label per row of X")
    if y.min() < 0:
        raise DataError("labels must be non-negative")
    return X, y


def best_split(X, y, n_classes: int):
    """Lowest weighted-Gini split of the rows ``(X, y)``.

    Candidates are midpoints between consecutive distinct sorted values of
    every feature. Among candidates within ``TIE_TOL`` of the minimum the
    lowest feature index, then the lowest threshold, wins.

    Returns
    -------
    (feature, threshold, impurity) or None when no two distinct values exist.
    """
    n, d = X.shape
    onehot = np.eye(n_classes)[y]
    total = onehot.sum(axis=0)
    nl = np.arange(1, n, dtype=float)[:, None]
    nr = n - nl
    per_feature = []
    best = np.inf
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            per_feature.append(None)
            continue
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = total - left
        imp = 1.0 - (np.sum(left * left / nl, axis=1) + np.sum(right * right / nr, axis=1)) / n
        imp[~valid] = np.inf
        per_feature.append((xs, imp))
        best = min(best, float(imp.min()))
    if not np.isfinite(best):
        return None
    for f, entry in enumerate(per_feature):
        if entry is None:
            continue
        xs, imp = entry
        hits = np.flatnonzero(imp <= best + TIE_TOL)
        if hits.size:
            j = hits[0]
            thr = 0.5 * (xs[j] + xs[j + 1])
            if thr <= xs[j]:
                thr = xs[j + 1]
            return f, float(thr), float(imp[j])
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class DecisionTree:
    """Array-encoded binary tree; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    histogram: np.ndarray
    n_features: int
    max_splits: int

    @property
    def n_classes(self) -> int:
        return self.histogram.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_splits(self) -> int:
        return int(np.count_nonzero(self.feature >= 0))

    @property
    def leaf_label(self) -> np.ndarray:
        return np.argmax(self.histogram, axis=1)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "histogram": self.histogram.tolist(),
            "n_features": self.n_features,
            "max_splits": self.max_splits,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            np.array(d["feature"], dtype=int),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=int),
            np.array(d["right"], dtype=int),
            np.array(d["histogram"], dtype=int).reshape(len(d["feature"]), -1),
            int(d["n_features"]),
            int(d["max_splits"]),
        )


def fit_tree(X, y, max_splits: int = 100, rng_seed: int = 0,
             n_classes: int | None = None) -> DecisionTree:
    """Greedy best-first CART with Gini impurity.

    Any impure leaf with two distinct values in some feature is a candidate,
    even at zero impurity decrease (an XOR node only pays off one level
    down). Growth stops when the split budget is spent or no candidate is left. ``rng_seed`` is accepted for interface symmetry with
    the ensemble; the growth itself is deterministic.
    """
    X, y = _check_Xy(X, y)
    if max_splits < 1:
        raise DataError("max_splits must be >= 1")
    C = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= C:
        raise DataError(f"label {y.max()} out of range for {C} classes")

    feature, threshold, left, right, hist, rows = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        hist.append(np.bincount(y[idx], minlength=C))
        rows.append(idx)
        return len(feature) - 1

    heap = []

    def consider(node):
        idx = rows[node]
        counts = hist[node]
        if np.count_nonzero(counts) < 2:
            return
        split = best_split(X[idx], y[idx], C)
        if split is None:
            return
        f, thr, imp = split
        parent = gini(counts)
        gain = max(idx.size * (parent - imp), 0.0)
        heapq.heappush(heap, (-gain, node, f, thr))

    consider(new_node(np.arange(y.size)))
    splits = 0
    while heap and splits < max_splits:
        _, node, f, thr = heapq.heappop(heap)
        idx = rows[node]
        go_left = X[idx, f] < thr
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(idx[go_left])
        right[node] = new_node(idx[~go_left])
        splits += 1
        consider(left[node])
        consider(right[node])

    return DecisionTree(
        np.array(feature, dtype=int),
        np.array(threshold, dtype=float),
        np.array(left, dtype=int),
        np.array(right, dtype=int),
        np.array(hist, dtype=int),
        X.shape[1],
        int(max_splits),
    )


def _apply(tree: DecisionTree, X) -> np.ndarray:
    """Leaf index reached by each row."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise DataError(
            f"dimension mismatch: tree expects {tree.n_features} features, got "
            f"{X.shape[1] if X.ndim == 2 else X.shape}"
        )
    node = np.zeros(X.shape[0], dtype=int)
    rows = np.arange(X.shape[0])
    while True:
        f = tree.feature[node]
        active = f >= 0
        if not active.any():
            return node
        a = rows[active]
        na = node[active]
        go_left = X[a, f[active]] < tree.threshold[na]
        node[a] = np.where(go_left, tree.left[na], tree.right[na])


def predict_tree(tree: DecisionTree, X) -> np.ndarray:
    return tree.leaf_label[_apply(tree, X)]


def bootstrap_sample(n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` uniform draws with replacement from ``0..n-1``."""
    if n < 1:
        raise DataError("bootstrap sample size must be >= 1")
    return rng.integers(0, n, size=n)


@dataclass(frozen=True)
class BaggedEnsemble:
    trees: tuple[DecisionTree, ...]
    bootstrap_records: tuple[np.ndarray, ...]
    seed: int
    class_count: int

    @property
    def n_learners(self) -> int:
        return len(self.trees)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "class_count": self.class_count,
            "trees": [t.to_dict() for t in self.trees],
            "bootstrap_records": [b.tolist() for b in self.bootstrap_records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaggedEnsemble":
        return cls(
            tuple(DecisionTree.from_dict(t) for t in d["trees"]),
            tuple(np.array(b, dtype=int) for b in d["bootstrap_records"]),
            int(d["seed"]),
            int(d["class_count"]),
        )


def fit_bdt(X, y, n_learners: int = BDT_LEARNERS, max_splits: int = BDT_MAX_SPLITS,
            seed: int = 0, n_classes: int | None = None,
            n_jobs: int | None = None) -> BaggedEnsemble:
    """Bagged CART ensemble.

    Tree ``t`` is grown on a bootstrap drawn from the stream seeded with
    ``(seed, t)``, so results do not depend on thread scheduling. The split
    budget is capped at ``n - 1``.
    """
    X, y = _check_Xy(X, y)
    if n_learners < 1:
        raise DataError("n_learners must be >= 1")
    C = int(y.max()) + 1 if n_classes is None else int(n_classes)
    n = y.size
    cap = max(1, min(int(max_splits), n - 1))

    def grow(t):
        boot = bootstrap_sample(n, np.random.default_rng([seed, t]))
        return boot, fit_tree(X[boot], y[boot], cap, rng_seed=t, n_classes=C)

    threads = min(resolve_threads(n_jobs), n_learners)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            grown = list(pool.map(grow, range(n_learners)))
    else:
        grown = [grow(t) for t in range(n_learners)]
    return BaggedEnsemble(
        tuple(g[1] for g in grown), tuple(g[0] for g in grown), int(seed), C
    )


def majority_vote(votes, n_classes: int) -> np.ndarray:
    """Plurality label per row of an ``n x T`` vote table; ties go to the lowest label."""
    votes = np.asarray(votes, dtype=int)
    if votes.ndim == 1:
        votes = votes[None, :]
    counts = np.zeros((votes.shape[0], n_classes), dtype=int)
    rows = np.repeat(np.arange(votes.shape[0]), votes.shape[1])
    np.add.at(counts, (rows, votes.ravel()), 1)
    return np.argmax(counts, axis=1)


def predict_bdt(ensemble: BaggedEnsemble, X) -> np.ndarray:
    votes = np.column_stack([predict_tree(t, X) for t in ensemble.trees])
    return majority_vote(votes, ensemble.class_count)


def oob_accuracy(ensemble: BaggedEnsemble, X, y) -> float | None:
    """Accuracy of out-of-bag majority votes over rows left out by at least one tree."""
    X, y = _check_Xy(X, y)
    counts = np.zeros((y.size, ensemble.class_count), dtype=int)
    rows = np.arange(y.size)
    for tree, boot in zip(ensemble.trees, ensemble.bootstrap_records):
        oob = np.ones(y.size, dtype=bool)
        oob[boot] = False
        if oob.any():
            counts[rows[oob], predict_tree(tree, X[oob])] += 1
    scored = counts.sum(axis=1) > 0
    if not scored.any():
        return None
    return float(np.mean(np.argmax(counts[scored], axis=1) == y[scored]))


def ensemble_summary(ensemble: BaggedEnsemble, X=None, y=None) -> dict:
    summary = {
        "n_learners": ensemble.n_learners,
        "seed": ensemble.seed,
        "class_count": ensemble.class_count,
        "node_counts": [t.n_nodes for t in ensemble.trees],
        "split_counts": [t.n_splits for t in ensemble.trees],
        "oob_fraction": [
            1.0 - np.unique(b).size / b.size for b in ensemble.bootstrap_records
        ],
    }
    if X is not None and y is not None:
        summary["oob_accuracy"] = oob_accuracy(ensemble, X, y)
    return summary


@dataclass(frozen=True)
class KNNClassifier:
    X: np.ndarray
    y: np.ndarray
    k: int = 1
    weighting: str = "uniform"
    n_classes: int = field(default=0)

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist(), "k": self.k,
                "weighting": self.weighting, "n_classes": self.n_classes}

    @classmethod
    def from_dict(cls, d: dict) -> "KNNClassifier":
        return fit_knn(np.array(d["X"], dtype=float), np.array(d["y"], dtype=int),
                       d["k"], d["weighting"], d["n_classes"])


def fit_knn(X, y, k: int = 1, weighting: str = "uniform",
            n_classes: int | None = None) -> KNNClassifier:
    X, y = _check_Xy(X, y)
    if not 1 <= k <= y.size:
        raise DataError(f"k must satisfy 1 <= k <= n_train = {y.size}, got {k}")
    if weighting not in ("uniform", "inverse-distance"):
        raise DataError(f"unknown weighting {weighting!r}")
    C = int(y.max()) + 1 if n_classes is None else int(n_classes)
    return KNNClassifier(X, y, int(k), weighting, C)


def predict_knn(model: KNNClassifier, X) -> np.ndarray:
    """Euclidean k-NN vote; neighbor and vote ties go to the lower index."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.X.shape[1]:
        raise DataError(
            f"dimension mismatch: model expects {model.X.shape[1]} features"
        )
    dist = cdist(X, model.X)
    nn = np.argsort(dist, axis=1, kind="stable")[:, : model.k]
    nd = np.take_along_axis(dist, nn, axis=1)
    w = np.ones_like(nd) if model.weighting == "uniform" else 1.0 / (nd + 1e-12)
    votes = np.zeros((X.shape[0], model.n_classes))
    np.add.at(votes, (np.repeat(np.arange(X.shape[0]), model.k), model.y[nn].ravel()), w.ravel())
    return np.argmax(votes, axis=1)
