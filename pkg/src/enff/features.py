"""Grid-discriminative features of ENF sequences.

Each (signal kind, nominal frequency) category has its own fixed feature
schedule; see :data:`SCHEDULES`. Features are computed on the raw ENF
values in Hz, except :func:`psd_feature`, which removes the mean first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .domain import Category, EnffError, EnfSequence, FeatureError, FeatureVector, SignalKind

log = logging.getLogger(__name__)

P60 = Category(SignalKind.POWER, 60)
P50 = Category(SignalKind.POWER, 50)
A60 = Category(SignalKind.AUDIO, 60)
A50 = Category(SignalKind.AUDIO, 50)

SCHEDULES: dict[Category, list[str]] = {
    P60: ["iqr", "log_var_autocorr", "log_ar4_fpe"],
    P50: ["mean", "crest_factor", "median", "waveform_length", "iqr", "ar4_g2"],
    A60: ["log_var_autocorr", "iqr", "median", "modified_mav"],
    A50: ["median", "psd", "ar4_g2", "log_var_autocorr"],
}
ALL_FEATURE_NAMES = list(dict.fromkeys(n for names in SCHEDULES.values() for n in names))


def _as_array(values, min_len: int, what: str) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < min_len:
        raise EnffError(f"{what} needs at least {min_len} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise EnffError(f"{what} got non-finite values")
    return x


def _median_sorted(s: np.ndarray) -> float:
    n = s.size
    mid = n // 2
    return float(s[mid]) if n % 2 else 0.5 * (s[mid - 1] + s[mid])


def quartiles(values) -> tuple[float, float, float]:
    """Q1, Q2, Q3 by the median-of-halves rule.

    For odd lengths the median itself belongs to neither half.
    """
    s = np.sort(_as_array(values, 4, "quartiles"))
    n = s.size
    lower, upper = s[: n // 2], s[(n + 1) // 2 :]
    return _median_sorted(lower), _median_sorted(s), _median_sorted(upper)


def iqr(values) -> float:
    q1, _, q3 = quartiles(values)
    return q3 - q1


def crest_factor(values) -> float:
    """Peak magnitude over RMS."""
    x = _as_array(values, 1, "crest factor")
    peak = np.max(np.abs(x))
    if peak == 0:
        raise EnffError("crest factor of an all-zero sequence is undefined")
    # normalising first keeps tiny inputs from underflowing in x**2
    u = x / peak
    return float(1.0 / np.sqrt(np.mean(u * u)))


def waveform_length(values) -> float:
    x = _as_array(values, 2, "waveform length")
    return float(np.sum(np.abs(np.diff(x))))


def modified_mav(values) -> float:
    """Half the mean absolute value (constant weight 0.5 on every sample)."""
    x = _as_array(values, 1, "modified MAV")
    return float(np.sum(0.5 * np.abs(x)) / x.size)


def autocorrelation(values) -> np.ndarray:
    """Biased sample autocorrelation for lags ``0 .. n-1`` (no mean removal)."""
    x = np.asarray(values, dtype=float)
    n = x.size
    return np.correlate(x, x, mode="full")[n - 1 :] / n


def log_var_autocorr(values) -> float:
    """Natural log of the population variance of :func:`autocorrelation`."""
    x = _as_array(values, 4, "log variance of autocorrelation")
    if np.ptp(x) == 0:
        raise EnffError("constant sequence")
    v = np.var(autocorrelation(x))
    if v <= 0:
        raise EnffError("autocorrelation has zero variance")
    return float(np.log(v))


@dataclass(frozen=True)
class Ar4Fit:
    """``f[k] = g1 f[k-1] + ... + g4 f[k-4] + e[k]`` with ``var(e) = h``."""

    g: tuple[float, float, float, float]
    h: float
    reflection: tuple[float, ...] = ()

    @property
    def g2(self) -> float:
        return self.g[1]


def burg(values, order: int) -> tuple[np.ndarray, float, np.ndarray]:
    """Burg AR estimate.

    Returns predictor coefficients ``g`` (so that ``x[n] ~ sum g[i] x[n-1-i]``),
    the final prediction error, and the reflection coefficients.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    fwd = x[1:].copy()
    bwd = x[:-1].copy()
    a = np.zeros(0)
    err = float(np.dot(x, x) / n)
    refl = []
    for m in range(order):
        den = np.dot(fwd, fwd) + np.dot(bwd, bwd)
        if den <= 0:
            raise EnffError("prediction errors vanished; sequence is exactly predictable")
        k = -2.0 * np.dot(fwd, bwd) / den
        if abs(k) >= 1.0:
            log.warning("Burg reflection coefficient %.6g clamped at stage %d", k, m + 1)
            k = np.sign(k) * (1.0 - 1e-12)
        a = np.concatenate([a + k * a[::-1], [k]])
        err *= 1.0 - k * k
        refl.append(k)
        if m + 1 < order:
            fwd, bwd = fwd[1:] + k * bwd[1:], bwd[:-1] + k * fwd[:-1]
    return -a, err, np.array(refl)


def burg_ar4(values) -> Ar4Fit:
    x = _as_array(values, 8, "AR(4) fit")
    if np.ptp(x) == 0:
        raise EnffError("constant sequence")
    g, h, refl = burg(x, 4)
    return Ar4Fit(tuple(float(v) for v in g), float(h), tuple(float(v) for v in refl))


def psd_feature(values, sample_rate_hz: float = 1.0) -> float:
    """Mean Welch density of the mean-removed sequence (Hann, segments of min(64, n), 50% overlap)."""
    x = _as_array(values, 16, "PSD feature")
    if np.ptp(x) == 0:
        return 0.0
    x = x - x.mean()
    nseg = min(64, x.size)
    _, pxx = sp_signal.welch(
        x, fs=sample_rate_hz, window="hann", nperseg=nseg, noverlap=nseg // 2, detrend=False
    )
    return float(np.mean(pxx))


def _feature_funcs(seq_rate: float):
    return {
        "iqr": iqr,
        "log_var_autocorr": log_var_autocorr,
        "log_ar4_fpe": lambda v: float(np.log(burg_ar4(v).h)),
        "mean": lambda v: float(np.mean(_as_array(v, 1, "mean"))),
        "crest_factor": crest_factor,
        "median": lambda v: float(np.median(_as_array(v, 1, "median"))),
        "waveform_length": waveform_length,
        "ar4_g2": lambda v: burg_ar4(v).g2,
        "modified_mav": modified_mav,
        "psd": lambda v: psd_feature(v, seq_rate),
    }


def compute_features(sequence: EnfSequence) -> FeatureVector:
    """Feature vector for the sequence's category, in schedule order."""
    cat = sequence.category
    names = SCHEDULES[cat]
    funcs = _feature_funcs(1.0 / sequence.frame_hop_s)
    values = []
    for name in names:
        try:
            v = funcs[name](sequence.values_hz)
        except EnffError as exc:
            raise FeatureError(name, str(exc)) from None
        if not np.isfinite(v):
            raise FeatureError(name, "non-finite result")
        values.append(v)
    return FeatureVector(cat, list(names), np.array(values), sequence.source_id, sequence.label)


def feature_distance_matrix(vectors: list[FeatureVector]) -> np.ndarray:
    """Euclidean distances between z-scored feature columns.

    Entry ``(i, j)`` compares feature ``i`` with feature ``j`` across all
    vectors. Constant columns z-score to zeros.
    """
    if not vectors:
        raise EnffError("no feature vectors")
    cats = {v.category for v in vectors}
    if len(cats) != 1:
        raise EnffError(f"mixed categories: {sorted(str(c) for c in cats)}")
    X = np.vstack([v.values for v in vectors])
    sd = X.std(axis=0)
    Z = np.where(sd > 0, (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0), 0.0)
    diff = Z[:, :, None] - Z[:, None, :]
    return np.sqrt(np.sum(diff**2, axis=0))
