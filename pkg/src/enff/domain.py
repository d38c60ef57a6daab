"""Core data types shared across the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class EnffError(ValueError):
    """Base class for pipeline errors."""


class FormatError(EnffError):
    """A file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class DegenerateFrameError(EnffError):
    """Frame carries no sinusoidal component to estimate."""


class NoRootInBandError(EnffError):
    """No noise-subspace root maps into the requested search band."""


class FeatureError(EnffError):
    """A scheduled feature could not be computed; ``feature`` names it."""

    def __init__(self, feature: str, reason: str):
        self.feature = feature
        super().__init__(f"feature {feature!r} failed: {reason}")


class GridLabel(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"
    G = "G"
    H = "H"
    I = "I"  # noqa: E741
    NoG = "NoG"

    @property
    def nominal_hz(self) -> int | None:
        if self is GridLabel.NoG:
            return None
        return 60 if self.value in "ACI" else 50

    @classmethod
    def parse(cls, token: str) -> GridLabel:
        try:
            return cls(token.strip())
        except ValueError:
            raise EnffError(f"unknown label {token!r}") from None

    def __str__(self) -> str:
        return self.value


GRIDS_60 = (GridLabel.A, GridLabel.C, GridLabel.I)
GRIDS_50 = (GridLabel.B, GridLabel.D, GridLabel.E, GridLabel.F, GridLabel.G, GridLabel.H)


class SignalKind(str, enum.Enum):
    POWER = "power"
    AUDIO = "audio"

    @classmethod
    def parse(cls, token: str) -> SignalKind:
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise EnffError(f"unknown signal kind {token!r}") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class Category:
    """(signal kind, nominal frequency) key used to pick features and models."""

    kind: SignalKind
    nominal_hz: int

    def __post_init__(self):
        if self.nominal_hz not in (50, 60):
            raise EnffError(f"nominal frequency must be 50 or 60, got {self.nominal_hz}")

    @classmethod
    def parse(cls, token: str) -> Category:
        """Parse ``"power:60"`` style tokens."""
        try:
            kind, hz = token.split(":")
            return cls(SignalKind.parse(kind), int(float(hz)))
        except (ValueError, TypeError):
            raise EnffError(f"bad category {token!r}, expected <power|audio>:<50|60>") from None

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.nominal_hz}"


@dataclass
class Recording:
    id: str
    samples: np.ndarray
    sample_rate_hz: float
    label: GridLabel | None = None
    kind_hint: SignalKind | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise EnffError("recording needs at least one sample")
        if not self.sample_rate_hz > 0:
            raise EnffError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(self.samples)):
            raise EnffError(f"recording {self.id!r} contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class EnfSequence:
    """Per-frame frequency estimates.

    ``frame_index`` counts frames over the whole recording, so skipped
    (failed) frames show up as gaps in the index rather than as values.
    """

    values_hz: np.ndarray
    times_s: np.ndarray
    frame_index: np.ndarray
    frame_length_s: float
    frame_hop_s: float
    nominal_hz: int
    signal_kind: SignalKind
    source_id: str
    label: GridLabel | None = None

    def __post_init__(self):
        self.values_hz = np.asarray(self.values_hz, dtype=float)
        self.times_s = np.asarray(self.times_s, dtype=float)
        self.frame_index = np.asarray(self.frame_index, dtype=int)
        if not (self.values_hz.shape == self.times_s.shape == self.frame_index.shape):
            raise EnffError("values, times and frame indices must have equal length")
        if self.frame_hop_s > self.frame_length_s:
            raise EnffError("frame hop must not exceed frame length")

    def __len__(self) -> int:
        return self.values_hz.size

    @property
    def category(self) -> Category:
        return Category(self.signal_kind, self.nominal_hz)

    def within_envelope(self, margin_hz: float = 2.0) -> bool:
        v = self.values_hz
        return bool(np.all(np.abs(v - self.nominal_hz) <= margin_hz))


@dataclass
class FeatureVector:
    category: Category
    names: list[str]
    values: np.ndarray
    source_id: str
    label: GridLabel | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.names) != self.values.size:
            raise EnffError("feature names and values differ in length")
        if not np.all(np.isfinite(self.values)):
            raise EnffError(f"non-finite feature value in {self.source_id!r}")


@dataclass
class SeparationReport:
    source_id: str
    dominant_frequency_hz: float
    band_halfwidth_hz: float
    snr_db: float
    decided_kind: SignalKind
    frame_snr_db: list[float] = field(default_factory=list)
    frame_dominant_hz: list[float] = field(default_factory=list)

    @property
    def nominal_hz(self) -> int:
        return base_frequency(self.dominant_frequency_hz)[0]


def base_frequency(f_d: float) -> tuple[int, int]:
    """Return ``(nominal_hz, harmonic_index)`` for a mains candidate frequency.

    Frequencies that are harmonics of both 50 and 60 Hz (300, 600, ...)
    are ambiguous and rejected.
    """
    hits = []
    for base in (50, 60):
        k = round(f_d / base)
        if k >= 1 and abs(f_d - k * base) < 1e-6 * base:
            hits.append((base, k))
    if len(hits) != 1:
        raise EnffError(f"{f_d} Hz is not an unambiguous harmonic of 50 or 60 Hz")
    return hits[0]
