"""Spectral estimates used to tell mains (power) captures from audio.

A recording is cut into 5 minute segments. In each segment the mains
candidate with the strongest STFT magnitude gives the dominant frequency,
and the Welch PSD gives the ratio of power inside ``f_d +/- 0.5 Hz`` to
power everywhere else. Power captures have a much higher ratio than
microphone recordings that only pick up hum.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .domain import EnffError, Recording, SeparationReport, SignalKind

BAND_HALFWIDTH_HZ = 0.5
SEGMENT_S = 300.0
STFT_FRAME_S = 2.0
WELCH_SEGMENT = 4096
WELCH_OVERLAP = 0.5
DEFAULT_SNR_THRESHOLD_DB = 15.0
SNR_CAP_DB = 300.0


@dataclass
class Spectrum:
    frequencies_hz: np.ndarray
    density: np.ndarray
    resolution_hz: float

    @property
    def total_power(self) -> float:
        return float(np.sum(self.density) * self.resolution_hz)


def _check_finite(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise EnffError("expected a one-dimensional signal")
    if not np.all(np.isfinite(x)):
        raise EnffError("signal contains non-finite samples")
    return x


def welch_psd(
    samples,
    sample_rate_hz: float,
    segment_length: int = WELCH_SEGMENT,
    overlap_fraction: float = WELCH_OVERLAP,
) -> Spectrum:
    """One-sided Welch PSD with a Hann window, in power per Hz.

    ``sum(density) * resolution_hz`` approximates the mean square of the
    signal.
    """
    x = _check_finite(samples)
    segment_length = int(segment_length)
    if segment_length < 2:
        raise EnffError("segment length must be at least 2")
    if x.size < segment_length:
        raise EnffError(f"segment of {segment_length} samples is longer than the signal ({x.size})")
    if not 0.0 <= overlap_fraction < 1.0:
        raise EnffError("overlap fraction must be in [0, 1)")
    freqs, pxx = sp_signal.welch(
        x,
        fs=sample_rate_hz,
        window="hann",
        nperseg=segment_length,
        noverlap=int(overlap_fraction * segment_length),
        detrend=False,
        scaling="density",
        return_onesided=True,
    )
    return Spectrum(freqs, np.maximum(pxx, 0.0), sample_rate_hz / segment_length)


def default_candidates(sample_rate_hz: float, halfwidth_hz: float = BAND_HALFWIDTH_HZ) -> list[float]:
    """Harmonics of 50 and 60 Hz whose band fits below Nyquist.

    Common multiples (300, 600, ...) are left out since they cannot be
    attributed to either nominal frequency.
    """
    nyq = sample_rate_hz / 2
    out = set()
    for base in (50, 60):
        k = 1
        while k * base + halfwidth_hz < nyq:
            f = k * base
            if f % 300 != 0:
                out.add(float(f))
            k += 1
    return sorted(out)


def stft_magnitude(samples, sample_rate_hz: float, frame_s: float = STFT_FRAME_S):
    """Hann-windowed STFT magnitudes with 50% overlap.

    Returns ``(freqs, mag)`` where ``mag`` has shape (frames, bins).
    """
    x = _check_finite(samples)
    n = int(round(frame_s * sample_rate_hz))
    if x.size < n:
        raise EnffError(f"signal shorter than one STFT frame ({x.size} < {n} samples)")
    hop = n // 2
    frames = np.lib.stride_tricks.sliding_window_view(x, n)[::hop]
    mag = np.abs(np.fft.rfft(frames * np.hanning(n), axis=1))
    return np.fft.rfftfreq(n, 1.0 / sample_rate_hz), mag


def dominant_frequency(
    samples,
    sample_rate_hz: float,
    candidates: list[float] | None = None,
    halfwidth_hz: float = BAND_HALFWIDTH_HZ,
) -> float:
    """Mains candidate whose +/- ``halfwidth_hz`` band has the largest mean STFT magnitude."""
    if candidates is None:
        candidates = default_candidates(sample_rate_hz, halfwidth_hz)
    if not candidates:
        raise EnffError("no candidate frequencies")
    freqs, mag = stft_magnitude(samples, sample_rate_hz)
    per_bin = mag.mean(axis=0)
    best, best_score = None, -np.inf
    for c in candidates:
        sel = np.abs(freqs - c) <= halfwidth_hz + 1e-9
        if not np.any(sel):
            continue
        score = per_bin[sel].mean()
        if score > best_score:
            best, best_score = float(c), score
    if best is None:
        raise EnffError("no candidate band overlaps the STFT grid")
    return best


def band_snr_db(spectrum: Spectrum, center_hz: float, halfwidth_hz: float = BAND_HALFWIDTH_HZ) -> float:
    """Ratio, in dB, of power inside ``center +/- halfwidth`` to power outside it.

    Clipped to +/-300 dB so that noiseless or silent inputs stay finite.
    """
    if halfwidth_hz <= 0:
        raise EnffError("band half-width must be positive")
    nyq = spectrum.frequencies_hz[-1]
    if center_hz - halfwidth_hz <= 0 or center_hz + halfwidth_hz >= nyq:
        raise EnffError(f"band {center_hz}+/-{halfwidth_hz} Hz is not inside (0, {nyq})")
    inside = np.abs(spectrum.frequencies_hz - center_hz) <= halfwidth_hz + 1e-9
    if not np.any(inside):
        raise EnffError(
            f"no bins inside {center_hz}+/-{halfwidth_hz} Hz at resolution {spectrum.resolution_hz:.4g} Hz"
        )
    p_in = float(np.sum(spectrum.density[inside]))
    p_out = float(np.sum(spectrum.density[~inside]))
    if p_in <= 0:
        return -SNR_CAP_DB
    if p_out <= 0:
        return SNR_CAP_DB
    return float(np.clip(10 * np.log10(p_in / p_out), -SNR_CAP_DB, SNR_CAP_DB))


def segment_bounds(n_samples: int, sample_rate_hz: float, segment_s: float = SEGMENT_S):
    """Sample ranges of consecutive segments; the last one may be shorter."""
    step = int(round(segment_s * sample_rate_hz))
    return [(s, min(s + step, n_samples)) for s in range(0, n_samples, step)]


def separate(
    recording: Recording,
    snr_threshold_db: float = DEFAULT_SNR_THRESHOLD_DB,
    candidates: list[float] | None = None,
    halfwidth_hz: float = BAND_HALFWIDTH_HZ,
) -> SeparationReport:
    """Decide whether a recording is a direct mains capture or an audio take.

    Each 5 minute segment yields a dominant frequency and a band SNR. The
    recording's ``f_d`` is the most common per-segment winner and the
    decision uses the median SNR. Trailing segments shorter than one STFT
    frame are ignored.
    """
    fs = recording.sample_rate_hz
    x = recording.samples
    min_len = int(round(STFT_FRAME_S * fs))
    if x.size < min_len:
        raise EnffError(f"recording {recording.id!r} is shorter than one STFT frame")
    if candidates is None:
        candidates = default_candidates(fs, halfwidth_hz)

    f_ds, snrs = [], []
    for lo, hi in segment_bounds(x.size, fs):
        if hi - lo < min_len:
            continue
        seg = x[lo:hi]
        f_d = dominant_frequency(seg, fs, candidates, halfwidth_hz)
        spec = welch_psd(seg, fs, min(WELCH_SEGMENT, seg.size))
        f_ds.append(f_d)
        snrs.append(band_snr_db(spec, f_d, halfwidth_hz))

    # Counter keeps first-seen order among ties
    f_d = Counter(f_ds).most_common(1)[0][0]
    snr = float(np.median(snrs))
    kind = SignalKind.POWER if snr >= snr_threshold_db else SignalKind.AUDIO
    return SeparationReport(recording.id, f_d, halfwidth_hz, snr, kind, snrs, f_ds)
