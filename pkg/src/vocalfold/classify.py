"""Logistic regression with speaker-disjoint stratified cross-validation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .features import SegmentFeatures, feature_matrix, standardize


class SingleClassError(ValueError):
    """Labels contain only one class."""


class SpeakerLeakError(AssertionError):
    """A speaker appears in both the training and the test partition of a fold."""


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2: float


def _check_binary(y) -> np.ndarray:
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClassError("both classes must be present")
    if not set(classes.tolist()) <= {0, 1}:
        raise ValueError(f"labels must be 0/1, got {classes}")
    return y.astype(float)


def _sigmoid(z):
    # clipping keeps the output strictly inside (0, 1)
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def cross_entropy(m: LogisticModel, X, y) -> float:
    z = X @ m.weights + m.bias
    # log(1 + e^z) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * m.l2 * np.dot(m.weights, m.weights))


def fit_logistic(X, y, l2: float = 0.01, epochs: int = 2000, lr: float = 0.5, trace: list | None = None) -> LogisticModel:
    """Full-batch gradient descent on L2-regularised mean cross-entropy.

    Weights start at zero, so the fit is deterministic. The bias is not
    penalised. If ``trace`` is a list, the loss before each epoch is appended.
    """
    X = np.asarray(X, float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("X must be a non-empty 2-D array")
    y = _check_binary(y)
    if l2 < 0 or lr <= 0 or epochs < 1:
        raise ValueError("need l2 >= 0, lr > 0, epochs >= 1")
    if lr * l2 >= 2.0:
        # the penalty term alone would make the iteration diverge
        raise ValueError(f"lr * l2 must be below 2, got {lr * l2}")
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(epochs):
        z = X @ w + b
        if trace is not None:
            trace.append(float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)))
        err = _sigmoid(z) - y
        w = w - lr * (X.T @ err / n + l2 * w)
        b = b - lr * float(err.mean())
    return LogisticModel(w, float(b), float(l2))


def decision_scores(m: LogisticModel, X) -> np.ndarray:
    X = np.asarray(X, float)
    if X.ndim != 2 or X.shape[1] != len(m.weights):
        raise ValueError(f"expected {len(m.weights)} features, got shape {X.shape}")
    return X @ m.weights + m.bias


def predict_scores(m: LogisticModel, X) -> np.ndarray:
    """Positive-class probabilities, strictly inside (0, 1)."""
    return _sigmoid(decision_scores(m, X))


class LogisticClassifier(BaseEstimator, ClassifierMixin):
    """Scikit-learn facade over :func:`fit_logistic`."""

    def __init__(self, l2=0.01, epochs=2000, lr=0.5):
        self.l2 = l2
        self.epochs = epochs
        self.lr = lr

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.array([0, 1])
        self.model_ = fit_logistic(X, y, self.l2, self.epochs, self.lr)
        self.coef_ = self.model_.weights[None, :]
        self.intercept_ = np.array([self.model_.bias])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return decision_scores(self.model_, check_array(X))

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of ROC-AUC; tied scores count one half."""
    s = np.asarray(scores, float)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in shape")
    _check_binary(y)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class CVPlan:
    folds: tuple  # of (train speaker frozenset, test speaker frozenset)
    seed: int

    def __post_init__(self):
        seen = []
        for train, test in self.folds:
            if train & test:
                raise SpeakerLeakError(f"speakers in both partitions: {sorted(train & test)}")
            seen.extend(test)
        if len(seen) != len(set(seen)):
            raise ValueError("a speaker appears in more than one test fold")


def make_cv_plan(speakers: Sequence[tuple[str, int]], k: int = 3, seed: int = 0) -> CVPlan:
    """Stratified k-fold split at speaker granularity.

    Speakers of each class are shuffled with a seeded generator and dealt
    round-robin into folds; negatives continue where positives stopped so fold
    sizes stay balanced.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    labels: dict[str, int] = {}
    for sid, lab in speakers:
        if lab is None:
            raise ValueError(f"speaker {sid!r} has no label")
        if labels.setdefault(sid, int(lab)) != int(lab):
            raise ValueError(f"speaker {sid!r} carries both labels")
    pos = sorted(s for s, lab in labels.items() if lab == 1)
    neg = sorted(s for s, lab in labels.items() if lab == 0)
    if len(pos) < k or len(neg) < k:
        raise ValueError(f"need at least {k} speakers per class, have {len(pos)} positive and {len(neg)} negative")
    rng = np.random.default_rng(seed)
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    tests = [set() for _ in range(k)]
    for i, s in enumerate(pos):
        tests[i % k].add(s)
    for i, s in enumerate(neg):
        tests[(i + len(pos)) % k].add(s)
    everyone = frozenset(labels)
    folds = tuple((everyone - frozenset(t), frozenset(t)) for t in tests)
    return CVPlan(folds, seed)


@dataclass(frozen=True)
class FoldResult:
    auc: float | None
    n_train_segments: int
    n_test_segments: int
    degenerate: bool = False


@dataclass(frozen=True)
class EvalReport:
    folds: tuple
    mean_auc: float
    std_auc: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "folds": [asdict(f) for f in self.folds],
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def evaluate(features: Sequence[SegmentFeatures], plan: CVPlan, l2: float = 0.01, epochs: int = 2000, lr: float = 0.5) -> EvalReport:
    """Per fold: standardise on train, fit, score test segments, compute AUC.

    Folds whose test partition holds a single class are flagged ``degenerate``
    and left out of the mean and standard deviation (population, across folds).
    """
    features = list(features)
    present = {f.speaker_id for f in features}
    aucs = []
    out = []
    for train_spk, test_spk in plan.folds:
        if train_spk & test_spk:
            raise SpeakerLeakError(f"speakers in both partitions: {sorted(train_spk & test_spk)}")
        train = [f for f in features if f.speaker_id in train_spk]
        test = [f for f in features if f.speaker_id in test_spk]
        if {f.speaker_id for f in train} & {f.speaker_id for f in test}:
            raise SpeakerLeakError("segment-level speaker overlap")
        ytr = np.array([f.label for f in train])
        yte = np.array([f.label for f in test])
        if len(np.unique(ytr)) < 2:
            raise SingleClassError("a training partition holds a single class")
        if len(test) == 0 or len(np.unique(yte)) < 2:
            out.append(FoldResult(None, len(train), len(test), True))
            continue
        Xtr, Xte, _ = standardize(train, test)
        model = fit_logistic(Xtr, ytr, l2, epochs, lr)
        auc = roc_auc(decision_scores(model, Xte), yte)
        aucs.append(auc)
        out.append(FoldResult(auc, len(train), len(test)))
    if not aucs:
        raise SingleClassError("every fold is degenerate")
    missing = set().union(*(t for _, t in plan.folds)) - present
    config = {"l2": l2, "epochs": epochs, "lr": lr, "seed": plan.seed, "k": len(plan.folds),
              "speakers_without_segments": sorted(missing)}
    return EvalReport(tuple(out), float(np.mean(aucs)), float(np.std(aucs)), config)
