"""Linear SVM, stratified cross-validation, and the proxy A-distance.

The SVM minimizes an L2-regularized mean hinge loss

    J(w, b) = ||w||^2 / (2 C) + mean_i max(0, 1 - t_i (w . x_i + b))

by full-batch subgradient descent with a monotone backtracking step
rule, so the recorded objective history never increases. Features are
standardized with training statistics inside ``fit``, which makes the
same C meaningful for 225-dimensional raw patches and 2-dimensional
embeddings alike. Multi-class problems use one-vs-rest with ties broken
toward the lowest class index.

The proxy A-distance between two sample sets is d_A = 2 (1 - 2 e),
where e is the stratified cross-validation error of a linear SVM trained
to tell the sets apart; it is clamped below at 0 when e > 0.5.
"""

from __future__ import annotations

import numpy as np

from .seeding import as_generator

MAX_EPOCHS = 500
CONVERGENCE_TOL = 1e-6
MIN_STEP = 1e-15


class LinearSVM:
    """L2-regularized hinge-loss linear classifier.

    Training is full-batch and starts from zero weights, so it is
    deterministic regardless of the seed argument, which exists for
    interface uniformity with the stochastic trainers.
    """

    def __init__(self, C: float = 1.0):
        if C <= 0.0:
            raise ValueError(f"regularization C must be positive, got {C}")
        self.C = C
        self.classes_: np.ndarray | None = None
        self.weights_: np.ndarray | None = None  # (n_problems, d)
        self.biases_: np.ndarray | None = None  # (n_problems,)
        self.mean_: np.ndarray | None = None
        self.scale_: np.ndarray | None = None
        self.objective_histories_: list[list[float]] = []

    def fit(self, features: np.ndarray, labels: np.ndarray, seed: int = 0) -> "LinearSVM":
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError(f"features {x.shape} and labels {y.shape} do not align")
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] < 2:
            raise ValueError(
                f"need at least 2 classes to train, got {self.classes_.shape[0]}"
            )
        self.mean_ = x.mean(axis=0)
        std = x.std(axis=0)
        self.scale_ = np.where(std > 0.0, std, 1.0)
        xs = (x - self.mean_) / self.scale_

        if self.classes_.shape[0] == 2:
            problems = [(y == self.classes_[1]).astype(np.float64) * 2.0 - 1.0]
        else:
            problems = [
                (y == c).astype(np.float64) * 2.0 - 1.0 for c in self.classes_
            ]
        self.weights_ = np.zeros((len(problems), x.shape[1]), dtype=np.float64)
        self.biases_ = np.zeros(len(problems), dtype=np.float64)
        self.objective_histories_ = []
        for k, targets in enumerate(problems):
            w, b, history = _descend(xs, targets, self.C)
            self.weights_[k] = w
            self.biases_[k] = b
            self.objective_histories_.append(history)
        return self

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        if self.weights_ is None:
            raise ValueError("model is not fitted")
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights_.shape[1]:
            raise ValueError(
                f"expected (n, {self.weights_.shape[1]}) features, got {x.shape}"
            )
        xs = (x - self.mean_) / self.scale_
        return xs @ self.weights_.T + self.biases_

    def predict(self, features: np.ndarray) -> np.ndarray:
        scores = self.decision_function(features)
        if self.classes_.shape[0] == 2:
            # Score ties (exactly 0) fall to the lowest class index.
            return np.where(scores[:, 0] > 0.0, self.classes_[1], self.classes_[0])
        return self.classes_[np.argmax(scores, axis=1)]


def _descend(xs: np.ndarray, targets: np.ndarray, C: float) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Monotone backtracking subgradient descent on one binary problem."""
    n, d = xs.shape
    w = np.zeros(d, dtype=np.float64)
    b = 0.0

    def objective(w_, b_):
        slack = np.maximum(0.0, 1.0 - targets * (xs @ w_ + b_))
        return float(w_ @ w_ / (2.0 * C) + slack.mean())

    obj = objective(w, b)
    history = [obj]
    step = 1.0
    for _ in range(MAX_EPOCHS):
        violated = 1.0 - targets * (xs @ w + b) > 0.0
        gw = w / C - (targets[violated] @ xs[violated]) / n
        gb = -float(targets[violated].sum()) / n
        while True:
            w_new = w - step * gw
            b_new = b - step * gb
            obj_new = objective(w_new, b_new)
            if obj_new <= obj or step < MIN_STEP:
                break
            step *= 0.5
        if obj_new > obj:
            break  # no descent found at any usable step; stay at the current point
        improvement = obj - obj_new
        w, b, obj = w_new, b_new, obj_new
        history.append(obj)
        step *= 1.2
        if improvement < CONVERGENCE_TOL:
            break
    return w, np.float64(b), history


def stratified_folds(labels: np.ndarray, folds: int, seed: int = 0) -> np.ndarray:
    """Assign each example to a fold, preserving class proportions within +-1.

    Each class's examples are shuffled and dealt round-robin over folds,
    with the starting fold rotating per class so small classes do not all
    land in fold 0.
    """
    y = np.asarray(labels)
    if folds < 2:
        raise ValueError(f"need at least 2 folds, got {folds}")
    classes, counts = np.unique(y, return_counts=True)
    smallest = int(counts.min())
    if smallest < folds:
        raise ValueError(
            f"cannot stratify: smallest class has {smallest} examples "
            f"but {folds} folds were requested"
        )
    rng = as_generator(seed)
    assignment = np.empty(y.shape[0], dtype=np.int64)
    for ci, c in enumerate(classes):
        idx = np.nonzero(y == c)[0]
        idx = rng.permutation(idx)
        assignment[idx] = (np.arange(idx.shape[0]) + ci) % folds
    return assignment


def cross_val_error(
    features: np.ndarray,
    labels: np.ndarray,
    folds: int = 5,
    C: float = 1.0,
    seed: int = 0,
) -> float:
    """Mean held-out misclassification rate over stratified folds."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    assignment = stratified_folds(y, folds, seed=seed)
    fold_errors = []
    for k in range(folds):
        test = assignment == k
        train = ~test
        model = LinearSVM(C=C).fit(x[train], y[train], seed=seed)
        pred = model.predict(x[test])
        fold_errors.append(float(np.mean(pred != y[test])))
    return float(np.mean(fold_errors))


def a_distance_from_error(e: float) -> float:
    """d_A = 2 (1 - 2 e), clamped below at 0."""
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"error rate must lie in [0, 1], got {e}")
    return max(0.0, 2.0 * (1.0 - 2.0 * e))


def proxy_a_distance(
    source_features: np.ndarray,
    target_features: np.ndarray,
    C: float = 1.0,
    folds: int = 5,
    max_per_side: int = 1500,
    seed: int = 0,
) -> tuple[float, float]:
    """Proxy A-distance between two feature sets; returns (d_A, e).

    Up to ``max_per_side`` rows are drawn from each side without
    replacement, a linear SVM discriminates side membership, and its
    stratified cross-validation error e gives d_A = 2 (1 - 2 e),
    clamped below at 0.
    """
    src = np.asarray(source_features, dtype=np.float64)
    tgt = np.asarray(target_features, dtype=np.float64)
    if src.shape[0] == 0 or tgt.shape[0] == 0:
        raise ValueError("both feature sets must be non-empty")
    if src.ndim != 2 or tgt.ndim != 2 or src.shape[1] != tgt.shape[1]:
        raise ValueError(
            f"feature sets must be 2-d with equal width, got {src.shape} and {tgt.shape}"
        )
    rng = as_generator(seed)
    if src.shape[0] > max_per_side:
        src = src[rng.choice(src.shape[0], size=max_per_side, replace=False)]
    if tgt.shape[0] > max_per_side:
        tgt = tgt[rng.choice(tgt.shape[0], size=max_per_side, replace=False)]
    x = np.vstack([src, tgt])
    side = np.concatenate([
        np.zeros(src.shape[0], dtype=np.int64),
        np.ones(tgt.shape[0], dtype=np.int64),
    ])
    e = cross_val_error(x, side, folds=folds, C=C, seed=seed)
    return a_distance_from_error(e), e


def tissue_error(model, inputs, labels) -> float:
    """Misclassification rate of a fitted predictor on labeled test inputs."""
    y = np.asarray(labels)
    if y.shape[0] == 0:
        raise ValueError("empty test set")
    pred = np.asarray(model.predict(inputs))
    return float(np.mean(pred != y))
