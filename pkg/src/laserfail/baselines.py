"""Classical baselines and the rule-based threshold detector.

The learned baselines all consume the flattened 104-value representation:
the 100 scaled current samples followed by the scaled I0, T, P and wavelength.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .degradation import DegradationMode
from .neural import softmax

N_CLASSES = len(DegradationMode)


def flatten_features(scaled: np.ndarray) -> np.ndarray:
    """``(n, 100, 5)`` scaled windows -> ``(n, 104)`` flat vectors."""
    scaled = np.asarray(scaled, dtype=float)
    return np.concatenate([scaled[:, :, 0], scaled[:, 0, 1:]], axis=1)


# --------------------------------------------------------------------- KNN


@dataclass(eq=False)
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 6

    def __post_init__(self):
        if len(self.X) == 0:
            raise ValueError("KNN needs a non-empty training set")
        if not 1 <= self.k <= len(self.X):
            raise ValueError(f"k={self.k} must lie in [1, {len(self.X)}]")

    def distances(self, queries: np.ndarray) -> np.ndarray:
        queries = np.atleast_2d(queries)
        out = np.empty((len(queries), len(self.X)))
        # Explicit differences rather than the expanded dot-product form, so
        # equal distances stay exactly equal.
        for s in range(0, len(queries), 64):
            diff = queries[s : s + 64, None, :] - self.X[None]
            out[s : s + 64] = np.sqrt(np.einsum("qnd,qnd->qn", diff, diff))
        return out

    def predict(self, queries: np.ndarray) -> np.ndarray:
        d = self.distances(queries)
        nearest = np.argsort(d, axis=1, kind="stable")[:, : self.k]
        preds = np.empty(len(d), dtype=np.int64)
        for q, idx in enumerate(nearest):
            preds[q] = _vote(self.y[idx], d[q, idx])
        return preds


def _vote(labels: np.ndarray, dists: np.ndarray) -> int:
    counts = np.bincount(labels, minlength=N_CLASSES)
    tied = np.flatnonzero(counts == counts.max())
    if len(tied) == 1:
        return int(tied[0])
    mean_d = [dists[labels == c].mean() for c in tied]
    return int(tied[int(np.argmin(mean_d))])


def knn_fit(X: np.ndarray, y: np.ndarray, k: int = 6) -> KnnModel:
    return KnnModel(np.asarray(X, dtype=float), np.asarray(y, dtype=np.int64), k)


def knn_predict(model: KnnModel, vector: np.ndarray) -> DegradationMode:
    return DegradationMode(int(model.predict(np.atleast_2d(vector))[0]))


# ------------------------------------------------------ logistic regression


@dataclass(eq=False)
class LogRegModel:
    """Multinomial logistic regression, ``W`` is ``(classes, features)``."""

    W: np.ndarray
    intercept: np.ndarray
    C: float = 100.0
    converged: bool = False
    iterations: int = 0
    objective_trace: list = field(default_factory=list, repr=False)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(np.atleast_2d(X) @ self.W.T + self.intercept)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def logreg_objective(W, intercept, X, y, C) -> float:
    """Mean cross-entropy plus ``(1/C) * 0.5 * ||W||^2``; intercepts unpenalised."""
    logits = X @ W.T + intercept
    logits = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(logits).sum(axis=1))
    nll = np.mean(log_norm - logits[np.arange(len(y)), y])
    return float(nll + 0.5 / C * np.sum(W * W))


def _logreg_gradient(W, intercept, X, y, C):
    probs = softmax(X @ W.T + intercept)
    probs[np.arange(len(y)), y] -= 1.0
    probs /= len(y)
    return probs.T @ X + W / C, probs.sum(axis=0)


def logreg_fit(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 100.0,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 5000,
) -> LogRegModel:
    """Full-batch gradient descent with Barzilai-Borwein trial steps.

    A trial step that raises the objective is halved until it does not, so
    the recorded objective trace never increases. Hitting ``max_iter`` sets
    ``converged=False`` and emits a warning instead of failing.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("logistic regression needs a non-empty training set")
    rng = np.random.default_rng(seed)
    theta = np.concatenate([rng.normal(0.0, 0.01, (N_CLASSES, X.shape[1])), np.zeros((N_CLASSES, 1))], axis=1)

    def unpack(t):
        return t[:, :-1], t[:, -1]

    def grad(t):
        gW, gb = _logreg_gradient(*unpack(t), X, y, C)
        return np.concatenate([gW, gb[:, None]], axis=1)

    obj = logreg_objective(*unpack(theta), X, y, C)
    g = grad(theta)
    trace = [obj]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) < tol:
            converged = True
            it -= 1
            break
        for _ in range(60):
            cand = theta - step * g
            cand_obj = logreg_objective(*unpack(cand), X, y, C)
            if cand_obj <= obj:
                break
            step *= 0.5
        else:
            # No descent possible at machine precision: we are at the optimum.
            converged = True
            break
        cand_g = grad(cand)
        s, d = (cand - theta).ravel(), (cand_g - g).ravel()
        sd = float(s @ d)
        step = float(s @ s) / sd if sd > 0 else step * 2.0
        theta, obj, g = cand, cand_obj, cand_g
        trace.append(obj)
    else:
        converged = np.linalg.norm(g) < tol
    if not converged:
        warnings.warn(f"logistic regression stopped after {max_iter} iterations, |grad|={np.linalg.norm(g):.2e}")
    W, b = unpack(theta)
    return LogRegModel(W.copy(), b.copy(), C, bool(converged), it, trace)


def logreg_predict(model: LogRegModel, vector: np.ndarray) -> tuple[DegradationMode, np.ndarray]:
    probs = model.predict_proba(vector)[0]
    return DegradationMode(int(np.argmax(probs))), probs


# ------------------------------------------------------------ random forest


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


@dataclass(eq=False)
class DecisionTree:
    """Flat-array binary tree; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.label[node]


def _best_split(X, y, rows, features, max_features):
    """Lowest weighted child Gini over the first ``max_features`` usable features."""
    n = len(rows)
    onehot = np.eye(N_CLASSES)[y[rows]]
    best = (math.inf, -1, 0.0)
    used = 0
    for f in features:
        values = X[rows, f]
        order = np.argsort(values, kind="stable")
        v = values[order]
        if v[0] == v[-1]:
            continue
        used += 1
        left_counts = np.cumsum(onehot[order], axis=0)[:-1]
        right_counts = left_counts[-1] + onehot[order[-1]] - left_counts
        n_left = np.arange(1, n)
        n_right = n - n_left
        gl = 1.0 - np.sum(left_counts**2, axis=1) / n_left**2
        gr = 1.0 - np.sum(right_counts**2, axis=1) / n_right**2
        impurity = (n_left * gl + n_right * gr) / n
        valid = v[1:] > v[:-1]
        impurity = np.where(valid, impurity, math.inf)
        pos = int(np.argmin(impurity))
        if impurity[pos] < best[0]:
            best = (float(impurity[pos]), int(f), 0.5 * (v[pos] + v[pos + 1]))
        if used >= max_features:
            break
    return best


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_features: int | None = None,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
) -> DecisionTree:
    """Greedy Gini tree grown until leaves are pure (or limits stop it)."""
    n_features = X.shape[1]
    max_features = n_features if max_features is None else max_features
    feature, threshold, left, right, label = [], [], [], [], []

    def new_node():
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (label, 0)):
            arr.append(v)
        return len(feature) - 1

    stack = [(new_node(), np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        counts = np.bincount(y[rows], minlength=N_CLASSES)
        label[node] = int(np.argmax(counts))
        if counts.max() == len(rows) or (max_depth is not None and depth >= max_depth):
            continue
        impurity, f, thr = _best_split(X, y, rows, rng.permutation(n_features), max_features)
        if f < 0 or impurity >= gini(counts):
            continue
        mask = X[rows, f] <= thr
        if min(mask.sum(), (~mask).sum()) < min_samples_leaf:
            continue
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], rows[~mask], depth + 1))
        stack.append((left[node], rows[mask], depth + 1))
    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(label, dtype=np.int64),
    )


@dataclass(eq=False)
class RandomForestModel:
    trees: list
    seed: int = 0
    bootstrap: bool = True
    max_features: int | None = None

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        counts = np.zeros((len(X), N_CLASSES), dtype=np.int64)
        for tree in self.trees:
            counts[np.arange(len(X)), tree.predict(X)] += 1
        return counts

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.votes(X) / len(self.trees)


def rf_fit(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    seed: int = 0,
    bootstrap: bool = True,
    max_features: int | None = None,
) -> RandomForestModel:
    """Bagged Gini trees; ``max_features`` defaults to ``floor(sqrt(n_features))``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("random forest needs a non-empty training set")
    if max_features is None:
        max_features = math.isqrt(X.shape[1])
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t,)))
        rows = rng.integers(0, len(X), len(X)) if bootstrap else np.arange(len(X))
        trees.append(build_tree(X[rows], y[rows], rng, max_features))
    return RandomForestModel(trees, seed, bootstrap, max_features)


def rf_predict(model: RandomForestModel, vector: np.ndarray) -> DegradationMode:
    return DegradationMode(int(model.predict(np.atleast_2d(vector))[0]))


# ------------------------------------------------------- threshold detector


@dataclass(frozen=True)
class ThresholdDetector:
    """Three-rule cascade on a raw (unscaled, mA) current window.

    1. nothing above ``I0 * (1 + eol_fraction)``        -> normal
    2. some single-step rise above ``jump_fraction * I0`` -> sudden
    3. first end-of-life crossing before ``rapid_index``  -> rapid
    4. otherwise                                          -> gradual
    """

    eol_current_increase_fraction: float = 0.20
    sudden_jump_step_fraction: float = 0.10
    rapid_crossing_index_bound: int = 30

    def __post_init__(self):
        if self.eol_current_increase_fraction <= 0 or self.sudden_jump_step_fraction <= 0:
            raise ValueError("threshold fractions must be positive")

    def classify(self, window: np.ndarray, threshold_current: float) -> DegradationMode:
        window = np.asarray(window, dtype=float)
        if threshold_current <= 0:
            raise ValueError("threshold current must be positive")
        above = np.flatnonzero(window > threshold_current * (1 + self.eol_current_increase_fraction))
        if len(above) == 0:
            return DegradationMode.NORMAL
        if np.any(np.diff(window) > self.sudden_jump_step_fraction * threshold_current):
            return DegradationMode.SUDDEN
        if above[0] < self.rapid_crossing_index_bound:
            return DegradationMode.RAPID
        return DegradationMode.GRADUAL

    def predict(self, windows, threshold_currents) -> np.ndarray:
        return np.array([int(self.classify(w, i0)) for w, i0 in zip(windows, threshold_currents)], dtype=np.int64)


def threshold_classify(detector: ThresholdDetector, window: np.ndarray, threshold_current: float) -> DegradationMode:
    return detector.classify(window, threshold_current)
