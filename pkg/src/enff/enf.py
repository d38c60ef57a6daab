"""Frame-wise ENF estimation with root-MUSIC."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import filters
from .domain import (
    DegenerateFrameError,
    EnffError,
    EnfSequence,
    NoRootInBandError,
    Recording,
    SignalKind,
    base_frequency,
)
from .spectral import BAND_HALFWIDTH_HZ, SEGMENT_S, segment_bounds

log = logging.getLogger(__name__)

SUBSPACE_ORDER = 20
NUM_SOURCES = 2
ENVELOPE_HZ = 2.0


@dataclass(frozen=True)
class FramingPolicy:
    frame_length_s: float
    frame_hop_s: float

    def __post_init__(self):
        if not 0 < self.frame_hop_s <= self.frame_length_s:
            raise EnffError("need 0 < frame hop <= frame length")


POWER_FRAMING = FramingPolicy(5.0, 5.0)
# 15 s frames overlapping the previous one by 10 s
AUDIO_FRAMING = FramingPolicy(15.0, 5.0)


def root_music_frequency(
    frame,
    sample_rate_hz: float,
    subspace_order: int = SUBSPACE_ORDER,
    num_sources: int = NUM_SOURCES,
    search_band_hz: tuple[float, float] = filters.POWER_BAND_HZ,
) -> float:
    """Estimate the frequency of the dominant sinusoid in ``frame``.

    Parameters
    ----------
    frame : array_like
        Real samples, at least ``4 * subspace_order`` long.
    sample_rate_hz : float
    subspace_order : int
        Size of the autocorrelation matrix.
    num_sources : int
        Signal subspace dimension; a real tone needs 2 (a conjugate pair).
    search_band_hz : (float, float)
        Only roots whose angle falls in this band are considered.

    Returns
    -------
    float
        Frequency in Hz of the in-band root closest to the unit circle.
    """
    x = np.asarray(frame, dtype=float)
    m = int(subspace_order)
    if num_sources < 1 or m <= num_sources:
        raise EnffError("subspace order must exceed the number of sources")
    if x.size < 4 * m:
        raise EnffError(f"frame of {x.size} samples is too short for order {m}")
    if not np.all(np.isfinite(x)):
        raise EnffError("frame contains non-finite samples")
    peak = np.max(np.abs(x))
    if peak == 0 or np.ptp(x) == 0:
        raise DegenerateFrameError("degenerate frame: constant signal")
    x = x / peak

    snapshots = np.lib.stride_tricks.sliding_window_view(x, m)
    R = snapshots.T @ snapshots / snapshots.shape[0]
    # forward-backward averaging: R <- (R + J R J) / 2
    R = 0.5 * (R + R[::-1, ::-1])
    try:
        evals, evecs = np.linalg.eigh(R)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFrameError(f"degenerate frame: {exc}") from None
    if evals[-num_sources] <= 1e-12 * evals[-1]:
        raise DegenerateFrameError("degenerate frame: signal subspace is rank deficient")

    noise = evecs[:, : m - num_sources]
    proj = noise @ noise.T
    coeffs = np.array([np.trace(proj, offset=k) for k in range(m - 1, -m, -1)])
    all_roots = np.roots(coeffs)
    inside = np.flatnonzero(np.abs(all_roots) < 1.0)
    freqs = np.angle(all_roots[inside]) * sample_rate_hz / (2 * np.pi)
    lo, hi = search_band_hz
    ok = (freqs >= lo) & (freqs <= hi)
    if not np.any(ok):
        raise NoRootInBandError(f"no root inside [{lo}, {hi}] Hz")
    best = inside[ok][np.argmax(np.abs(all_roots[inside[ok]]))]
    r = all_roots[best]
    # Roots come in pairs (r, 1/conj(r)). Rounding can split a nearly double
    # pair along the circle instead of along the radius; averaging the two
    # angles cancels that and is a no-op for a radial pair.
    others = np.delete(all_roots, best)
    mate = others[np.argmin(np.abs(others - 1.0 / np.conj(r)))]
    angle = np.angle(r) + 0.5 * np.angle(mate / r)
    return float(angle * sample_rate_hz / (2 * np.pi))


def frame_starts(n_samples: int, frame_len: int, hop: int) -> range:
    """Start offsets of full frames; a trailing partial frame is dropped."""
    if n_samples < frame_len:
        return range(0)
    return range(0, n_samples - frame_len + 1, hop)


def _extract(
    recording: Recording,
    band: tuple[float, float],
    framing: FramingPolicy,
    kind: SignalKind,
    harmonic: int,
    subspace_order: int,
    filter_order: int,
) -> EnfSequence:
    fs = recording.sample_rate_hz
    x = recording.samples
    cascade = filters.design_butterworth_bandpass(filter_order, band[0], band[1], fs)
    flen = int(round(framing.frame_length_s * fs))
    hop = int(round(framing.frame_hop_s * fs))

    values, times, index = [], [], []
    counter = 0
    for lo, hi in segment_bounds(x.size, fs, SEGMENT_S):
        y = filters.apply(cascade, x[lo:hi])
        for start in frame_starts(y.size, flen, hop):
            try:
                f = root_music_frequency(
                    y[start : start + flen], fs, subspace_order, NUM_SOURCES, band
                )
            except EnffError as exc:
                log.info("%s: frame %d skipped (%s)", recording.id, counter, exc)
            else:
                values.append(f / harmonic)
                times.append((lo + start) / fs)
                index.append(counter)
            counter += 1

    if not values:
        raise EnffError(f"no ENF frames could be estimated for {recording.id!r}")
    values = np.array(values)
    nominal = _nominal_of(values)
    keep = np.abs(values - nominal) <= ENVELOPE_HZ
    if not np.all(keep):
        log.info("%s: %d frames outside the +/-%g Hz envelope dropped",
                 recording.id, int(np.sum(~keep)), ENVELOPE_HZ)
    if not np.any(keep):
        raise EnffError(f"no ENF frames of {recording.id!r} fall inside the sanity envelope")
    return EnfSequence(
        values_hz=values[keep],
        times_s=np.array(times)[keep],
        frame_index=np.array(index)[keep],
        frame_length_s=framing.frame_length_s,
        frame_hop_s=framing.frame_hop_s,
        nominal_hz=nominal,
        signal_kind=kind,
        source_id=recording.id,
        label=recording.label,
    )


def extract_power_enf(
    recording: Recording,
    band: tuple[float, float] = filters.POWER_BAND_HZ,
    framing: FramingPolicy = POWER_FRAMING,
    subspace_order: int = SUBSPACE_ORDER,
    filter_order: int = filters.FILTER_ORDER,
) -> EnfSequence:
    """ENF of a direct mains capture: wide [40, 70] Hz band, 5 s frames."""
    return _extract(recording, band, framing, SignalKind.POWER, 1, subspace_order, filter_order)


def extract_audio_enf(
    recording: Recording,
    f_d: float,
    framing: FramingPolicy = AUDIO_FRAMING,
    subspace_order: int = SUBSPACE_ORDER,
    filter_order: int = filters.FILTER_ORDER,
    halfwidth_hz: float = BAND_HALFWIDTH_HZ,
) -> EnfSequence:
    """ENF of an audio recording around the hum at ``f_d``.

    When ``f_d`` is a harmonic, estimates are divided by the harmonic
    index so the sequence is reported at the base frequency.
    """
    _, harmonic = base_frequency(f_d)
    band = (f_d - halfwidth_hz, f_d + halfwidth_hz)
    return _extract(recording, band, framing, SignalKind.AUDIO, harmonic, subspace_order, filter_order)


def _nominal_of(values) -> int:
    return 50 if float(np.mean(values)) < 55.0 else 60


def route_nominal(sequence: EnfSequence) -> int:
    """Tag the sequence 50 or 60 Hz by its mean (a mean of exactly 55 goes to 60)."""
    if len(sequence) == 0:
        raise EnffError("cannot route an empty ENF sequence")
    sequence.nominal_hz = _nominal_of(sequence.values_hz)
    return sequence.nominal_hz
