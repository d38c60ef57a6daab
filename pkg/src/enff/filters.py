"""Butterworth band-pass design as a cascade of biquads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .domain import EnffError

POWER_BAND_HZ = (40.0, 70.0)
FILTER_ORDER = 2


@dataclass(frozen=True)
class BiquadCascade:
    """Second-order sections, one row ``(b0, b1, b2, a1, a2)`` per section (``a0 = 1``)."""

    sections: np.ndarray
    sample_rate_hz: float
    passband_hz: tuple[float, float]

    def sos(self) -> np.ndarray:
        s = self.sections
        return np.column_stack([s[:, 0], s[:, 1], s[:, 2], np.ones(len(s)), s[:, 3], s[:, 4]])

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots([1.0, a1, a2]) for a1, a2 in self.sections[:, 3:]])

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response at ``freqs_hz``."""
        z = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) / self.sample_rate_hz)
        h = np.ones_like(z)
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 * z + b2 * z * z) / (1.0 + a1 * z + a2 * z * z)
        return h


def design_butterworth_bandpass(
    order: int, low_hz: float, high_hz: float, sample_rate_hz: float
) -> BiquadCascade:
    """Digital Butterworth band-pass of prototype order ``order``.

    The analog low-pass prototype is shifted to a band-pass around the
    prewarped edges and mapped through the bilinear transform, so the
    band edges land exactly on the -3 dB points. The result has
    ``2 * order`` poles, grouped into ``order`` biquads.
    """
    if int(order) != order or order < 1:
        raise EnffError(f"filter order must be a positive integer, got {order}")
    order = int(order)
    nyq = sample_rate_hz / 2
    if not 0 < low_hz < high_hz < nyq:
        raise EnffError(f"invalid band [{low_hz}, {high_hz}] Hz for sample rate {sample_rate_hz} Hz")

    fs2 = 2.0 * sample_rate_hz
    w_lo = fs2 * np.tan(np.pi * low_hz / sample_rate_hz)
    w_hi = fs2 * np.tan(np.pi * high_hz / sample_rate_hz)
    bw = w_hi - w_lo
    w0 = np.sqrt(w_lo * w_hi)

    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    half = proto * bw / 2
    disc = np.sqrt(half**2 - w0**2 + 0j)
    analog = np.concatenate([half + disc, half - disc])
    # order zeros at s=0 and order at infinity; gain bw**order
    digital = (fs2 + analog) / (fs2 - analog)
    gain = np.real(bw**order * fs2**order / np.prod(fs2 - analog))

    sections = []
    for a1, a2 in _pair_poles(digital):
        sections.append([1.0, 0.0, -1.0, a1, a2])
    sections = np.array(sections)
    sections[:, :3] *= abs(gain) ** (1.0 / order)
    if gain < 0:
        sections[0, :3] *= -1
    cascade = BiquadCascade(sections, float(sample_rate_hz), (float(low_hz), float(high_hz)))
    if not cascade.is_stable():
        raise EnffError("designed filter is unstable; band too narrow for float precision")
    return cascade


def _pair_poles(poles: np.ndarray) -> list[tuple[float, float]]:
    """Group poles into real ``(a1, a2)`` denominators of ``1 + a1 z^-1 + a2 z^-2``."""
    tol = 1e-10
    upper = sorted((p for p in poles if p.imag > tol), key=lambda p: (abs(p), p.real))
    reals = sorted(p.real for p in poles if abs(p.imag) <= tol)
    out = [(-2.0 * p.real, abs(p) ** 2) for p in upper]
    if len(reals) % 2:
        raise EnffError("unpaired real pole")
    for r1, r2 in zip(reals[::2], reals[1::2]):
        out.append((-(r1 + r2), r1 * r2))
    return out


def apply(cascade: BiquadCascade, samples) -> np.ndarray:
    """Causal filtering with zero initial state (transposed direct form II)."""
    x = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(x)):
        raise EnffError("cannot filter non-finite samples")
    return sp_signal.sosfilt(cascade.sos(), x)


def impulse_response(cascade: BiquadCascade, n: int) -> np.ndarray:
    x = np.zeros(n)
    x[0] = 1.0
    return apply(cascade, x)
