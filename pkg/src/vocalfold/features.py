"""Per-segment feature vectors built from estimation results."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .adles import EstimationResult

FEATURE_NAMES = ("alpha", "beta", "delta", "res_energy", "res_mean_abs", "res_max_abs")
CSV_COLUMNS = ("segment_id", "speaker_id", "vowel", "label") + FEATURE_NAMES + ("converged",)


@dataclass(frozen=True)
class SegmentFeatures:
    segment_id: str
    speaker_id: str
    vowel: str
    label: int | None
    alpha: float
    beta: float
    delta: float
    res_energy: float
    res_mean_abs: float
    res_max_abs: float
    converged: bool = True

    def __post_init__(self):
        if min(self.res_energy, self.res_mean_abs, self.res_max_abs) < 0:
            raise ValueError("residual statistics must be non-negative")

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in FEATURE_NAMES], dtype=float)


def featurize(result: EstimationResult, meta: Mapping) -> SegmentFeatures:
    """Parameters plus residual energy, mean |R| and max |R|.

    ``meta`` supplies ``segment_id``, ``speaker_id``, ``vowel`` and ``label``.
    Non-converged results are kept; their flag rides along.
    """
    r = result.residual
    if len(r.values) == 0:
        raise ValueError("empty residual series")
    return SegmentFeatures(
        segment_id=str(meta.get("segment_id", "")),
        speaker_id=str(meta.get("speaker_id", "")),
        vowel=str(meta.get("vowel", "other")),
        label=meta.get("label"),
        alpha=result.params.alpha,
        beta=result.params.beta,
        delta=result.params.delta,
        res_energy=float(r.energy),
        res_mean_abs=r.mean_abs,
        res_max_abs=r.max_abs,
        converged=bool(result.converged),
    )


def feature_matrix(records: Iterable[SegmentFeatures]) -> np.ndarray:
    rows = [r.vector() for r in records]
    return np.vstack(rows) if rows else np.empty((0, len(FEATURE_NAMES)))


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Z-scoring with population statistics; zero-variance columns map to 0."""

    def fit(self, X, y=None):
        X = check_array(X)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X)
        safe = np.where(self.scale_ > 0, self.scale_, 1.0)
        Z = (X - self.mean_) / safe
        Z[:, self.scale_ == 0] = 0.0
        return Z


def standardize(train, apply_to):
    """Fit a scaler on ``train`` only and apply it to both sets.

    Accepts lists of :class:`SegmentFeatures` or plain matrices. Returns
    ``(train_z, apply_z, scaler)``.
    """
    Xtr = feature_matrix(train) if _is_records(train) else np.asarray(train, float)
    Xap = feature_matrix(apply_to) if _is_records(apply_to) else np.asarray(apply_to, float)
    if len(Xtr) == 0:
        raise ValueError("empty training set")
    scaler = FeatureScaler().fit(Xtr)
    return scaler.transform(Xtr), (scaler.transform(Xap) if len(Xap) else Xap), scaler


def _is_records(x) -> bool:
    return isinstance(x, (list, tuple)) and (len(x) == 0 or isinstance(x[0], SegmentFeatures))


def write_features_csv(records: Iterable[SegmentFeatures], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            row = asdict(r)
            row["label"] = "" if r.label is None else r.label
            row["converged"] = int(r.converged)
            for c in FEATURE_NAMES:
                row[c] = repr(float(row[c]))  # shortest round-tripping form
            w.writerow([row[c] for c in CSV_COLUMNS])


def _from_mapping(row: Mapping) -> SegmentFeatures:
    label = row.get("label")
    if label in ("", None):
        label = None
    else:
        label = int(float(label))
    conv = row.get("converged", True)
    if isinstance(conv, str):
        conv = conv.strip().lower() in ("1", "true", "yes")
    return SegmentFeatures(
        segment_id=str(row.get("segment_id", "")),
        speaker_id=str(row["speaker_id"]),
        vowel=str(row.get("vowel", "other")),
        label=label,
        alpha=float(row["alpha"]),
        beta=float(row["beta"]),
        delta=float(row["delta"]),
        res_energy=float(row.get("res_energy", row.get("residual_energy"))),
        res_mean_abs=float(row.get("res_mean_abs", row.get("residual_mean_abs"))),
        res_max_abs=float(row.get("res_max_abs", row.get("residual_max_abs"))),
        converged=bool(conv),
    )


def read_features(path) -> list[SegmentFeatures]:
    """Load features from the CSV table or from per-segment JSON-lines results."""
    path = str(path)
    if path.endswith((".jsonl", ".json")):
        with open(path) as fh:
            return [_from_mapping(json.loads(line)) for line in fh if line.strip()]
    with open(path, newline="") as fh:
        return [_from_mapping(row) for row in csv.DictReader(fh, skipinitialspace=True)]
