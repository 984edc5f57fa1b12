"""Glottal inverse filtering: recover the measured glottal flow from speech."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array


class IllConditionedError(ValueError):
    """The autocorrelation normal equations are singular for this segment."""


@dataclass(frozen=True)
class GlottalWaveform:
    samples: np.ndarray
    sample_rate: float
    kind: str = "measured"  # "measured" or "predicted"
    degenerate: bool = False

    def __post_init__(self):
        if self.kind not in ("measured", "predicted"):
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")

    def __len__(self):
        return len(self.samples)

    def normalized(self) -> "GlottalWaveform":
        return GlottalWaveform(normalize_peak(self.samples), self.sample_rate, self.kind, self.degenerate)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "u0m"])
            for i, u in enumerate(self.samples):
                w.writerow([repr(i / self.sample_rate), repr(float(u))])


def default_lpc_order(sample_rate: float) -> int:
    return int(round(sample_rate / 1000.0)) + 2


@dataclass(frozen=True)
class InverseFilterConfig:
    lpc_order: int = 10
    preemphasis: float = 0.97
    normalize: bool = True
    leak: float = 0.99
    remove_transient: bool = True

    def __post_init__(self):
        if self.lpc_order < 2:
            raise ValueError("lpc_order must be >= 2")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValueError("preemphasis must lie in [0, 1)")
        if not 0.0 < self.leak < 1.0:
            raise ValueError("leak must lie in (0, 1)")

    def check_length(self, n: int) -> None:
        if not self.lpc_order < n / 2:
            raise ValueError(f"lpc_order {self.lpc_order} too large for {n}-sample segment")


def normalize_peak(x) -> np.ndarray:
    """Scale to unit peak absolute amplitude; all-zero input is returned as is."""
    x = np.asarray(x, dtype=float)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0:
        return x.copy()
    return x / peak


def levinson(r: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Levinson-Durbin recursion.

    Returns the prediction-error filter ``a`` (with ``a[0] == 1``) and the
    final prediction error power. Raises :class:`IllConditionedError` if the
    recursion meets a non-positive error power, i.e. a singular Toeplitz system.
    """
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = float(r[0])
    if not err > 0:
        raise IllConditionedError("zero autocorrelation at lag 0")
    for m in range(1, order + 1):
        acc = r[m] + np.dot(a[1:m], r[m - 1 : 0 : -1])
        k = -acc / err
        a[1 : m + 1] = a[1 : m + 1] + k * a[m - 1 :: -1][: m]
        err *= 1.0 - k * k
        if not err > 1e-12 * r[0]:
            raise IllConditionedError(f"prediction error vanished at order {m}")
    return a, err


def lpc(x: np.ndarray, order: int) -> np.ndarray:
    """All-pole fit by the autocorrelation method on a Hann-tapered frame."""
    w = x * np.hanning(len(x) + 2)[1:-1]
    r = np.correlate(w, w, "full")[len(w) - 1 : len(w) + order]
    a, _ = levinson(r, order)
    return a


def _transient_fit(n: int, leak: float, y: np.ndarray) -> np.ndarray:
    basis = np.column_stack([np.ones(n), leak ** np.arange(n)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return basis @ coef


def inverse_filter(samples, sample_rate: float, cfg: InverseFilterConfig = InverseFilterConfig()) -> GlottalWaveform:
    """Estimate the glottal volume velocity underlying a voiced segment.

    The pre-emphasised segment is fit with an all-pole vocal tract model; the
    raw segment is passed through the inverse (FIR) filter, which leaves the
    glottal flow derivative, and a leaky integrator turns that back into flow.
    The integrator starts from rest, so its output carries a decaying term
    ``c * leak**n`` set by the unknown flow before the segment; with
    ``remove_transient`` that term and the lost mean are fit by least squares
    and subtracted.
    An all-zero segment yields an all-zero waveform flagged ``degenerate``.
    """
    x = np.asarray(samples, dtype=float)
    cfg.check_length(len(x))
    if not np.any(x):
        return GlottalWaveform(np.zeros_like(x), sample_rate, "measured", degenerate=True)
    emph = lfilter([1.0, -cfg.preemphasis], [1.0], x)
    a = lpc(emph, cfg.lpc_order)
    dflow = lfilter(a, [1.0], x)
    flow = lfilter([1.0], [1.0, -cfg.leak], dflow)
    if cfg.remove_transient:
        flow = flow - _transient_fit(len(flow), cfg.leak, flow)
    if cfg.normalize:
        flow = normalize_peak(flow)
    return GlottalWaveform(flow, sample_rate, "measured")


def scale_to_flow(p0: GlottalWaveform, area_at_glottis: float = 1.0, rho: float = 1.0, c_sound: float = 1.0) -> GlottalWaveform:
    """Convert glottal pressure to volume velocity, ``A(0) / (rho c) * p0``."""
    if not (area_at_glottis > 0 and rho > 0 and c_sound > 0):
        raise ValueError("area, density and sound speed must all be positive")
    k = area_at_glottis / (rho * c_sound)
    return GlottalWaveform(p0.samples * k, p0.sample_rate, "measured", p0.degenerate)


class InverseFilter(BaseEstimator, TransformerMixin):
    """Row-wise glottal inverse filtering of equal-length speech segments.

    Stateless: ``fit`` only validates. ``transform`` maps an array of shape
    ``(n_segments, n_samples)`` to measured glottal flows of the same shape.
    """

    def __init__(self, sample_rate=8000.0, lpc_order=None, preemphasis=0.97, normalize=True, leak=0.99,
                 remove_transient=True):
        self.sample_rate = sample_rate
        self.lpc_order = lpc_order
        self.preemphasis = preemphasis
        self.normalize = normalize
        self.leak = leak
        self.remove_transient = remove_transient

    def _config(self) -> InverseFilterConfig:
        order = self.lpc_order if self.lpc_order is not None else default_lpc_order(self.sample_rate)
        return InverseFilterConfig(order, self.preemphasis, self.normalize, self.leak, self.remove_transient)

    def fit(self, X, y=None):
        X = check_array(X)
        self._config().check_length(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        cfg = self._config()
        return np.vstack([inverse_filter(row, self.sample_rate, cfg).samples for row in X])
