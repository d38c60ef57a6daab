"""Synthetic grid recordings with known ENF.

The frequency walk is a mean-reverting AR(1) process, advanced once per
``wander_timescale_s`` and linearly interpolated in between, then clipped
to the profile's deviation limits. It reverts to the midpoint of the
limits (nominal when they are symmetric) and its stationary standard
deviation is one sixth of the limit span, so clipping is rare.
Rendering integrates the instantaneous frequency into a phase-continuous
tone, so ``walk`` is the exact ground truth for every sample.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np
from scipy import signal as sp_signal

from .domain import EnffError, GridLabel, Recording, SignalKind

DEFAULT_STEP_S = 0.1
TONE_AMPLITUDE = 0.5
SPEECH_LOWPASS_HZ = 250.0


@dataclass(frozen=True)
class GridProfile:
    nominal_hz: int
    deviation_limits_hz: tuple[float, float]  # (negative, positive)
    wander_timescale_s: float
    stability: float
    harmonic_levels: tuple[float, ...] = ()
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        neg, pos = self.deviation_limits_hz
        if not neg <= 0 <= pos:
            raise EnffError(f"deviation limits {self.deviation_limits_hz} must bracket 0")
        if not 0 <= self.stability < 1:
            raise EnffError("stability (AR pole) must be in [0, 1)")
        if self.wander_timescale_s <= 0:
            raise EnffError("wander timescale must be positive")
        if self.nominal_hz not in (50, 60):
            raise EnffError("nominal frequency must be 50 or 60 Hz")

    @property
    def walk_center_hz(self) -> float:
        neg, pos = self.deviation_limits_hz
        return self.nominal_hz + 0.5 * (neg + pos)

    @property
    def walk_std_hz(self) -> float:
        neg, pos = self.deviation_limits_hz
        return (pos - neg) / 6.0

    @classmethod
    def from_dict(cls, d: dict) -> GridProfile:
        return cls(
            nominal_hz=int(d["nominal_hz"]),
            deviation_limits_hz=tuple(float(v) for v in d["deviation_limits_hz"]),
            wander_timescale_s=float(d["wander_timescale_s"]),
            stability=float(d["stability"]),
            harmonic_levels=tuple(float(v) for v in d.get("harmonic_levels", ())),
            seed=int(d.get("seed", 0)),
            name=str(d.get("name", "")),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deviation_limits_hz"] = list(self.deviation_limits_hz)
        d["harmonic_levels"] = list(self.harmonic_levels)
        return d


def builtin_profiles() -> dict[str, dict[str, GridProfile]]:
    """The nine shipped grid profiles, keyed by grid label then signal kind."""
    text = resources.files("enff").joinpath("profiles.json").read_text()
    raw = json.loads(text)
    return {
        grid: {kind: GridProfile.from_dict({**p, "name": f"{grid}-{kind}"}) for kind, p in kinds.items()}
        for grid, kinds in raw["grids"].items()
    }


def get_profile(name: str, kind: SignalKind | str) -> GridProfile:
    kind = SignalKind.parse(str(kind))
    profiles = builtin_profiles()
    if name not in profiles:
        raise EnffError(f"unknown profile {name!r}; built-ins are {sorted(profiles)}")
    return profiles[name][kind.value]


def synth_frequency_walk(
    profile: GridProfile, duration_s: float, step_s: float = DEFAULT_STEP_S, seed: int | None = None
) -> np.ndarray:
    """Instantaneous frequency (Hz) sampled every ``step_s`` seconds.

    The result has ``floor(duration_s / step_s) + 1`` points covering
    ``[0, duration_s]``. ``seed`` overrides ``profile.seed``.
    """
    if duration_s < step_s or step_s <= 0:
        raise EnffError("need duration >= step > 0")
    rng = np.random.default_rng(profile.seed if seed is None else seed)
    n = int(np.floor(duration_s / step_s + 1e-9)) + 1
    t = np.arange(n) * step_s

    tau = profile.wander_timescale_s
    n_knots = int(np.ceil(t[-1] / tau)) + 2
    rho = profile.stability
    sigma = profile.walk_std_hz
    innov = rng.standard_normal(n_knots) * sigma * np.sqrt(1 - rho**2)
    knots = np.empty(n_knots)
    knots[0] = rng.standard_normal() * sigma
    for k in range(1, n_knots):
        knots[k] = rho * knots[k - 1] + innov[k]
    dev = np.interp(t, np.arange(n_knots) * tau, knots)
    neg, pos = profile.deviation_limits_hz
    return profile.nominal_hz + np.clip(profile.walk_center_hz - profile.nominal_hz + dev, neg, pos)


def _phase(walk, step_s: float, n_samples: int, sample_rate_hz: float) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate_hz
    walk = np.asarray(walk, dtype=float)
    if t[-1] > (walk.size - 1) * step_s + 1e-9:
        raise EnffError("walk is shorter than the requested recording")
    inst = np.interp(t, np.arange(walk.size) * step_s, walk)
    # phase at sample n integrates frequency over [0, n/fs)
    return 2 * np.pi * np.concatenate([[0.0], np.cumsum(inst[:-1])]) / sample_rate_hz


def _duration_samples(walk, step_s, sample_rate_hz) -> int:
    return int(round((len(walk) - 1) * step_s * sample_rate_hz))


def _tone(phase, rng, harmonic_levels) -> np.ndarray:
    y = TONE_AMPLITUDE * np.sin(phase + rng.uniform(0, 2 * np.pi))
    for k, level in enumerate(harmonic_levels, start=2):
        if level:
            y += level * TONE_AMPLITUDE * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return y


def render_power(
    walk,
    sample_rate_hz: float = 1000.0,
    snr_db: float = 40.0,
    *,
    step_s: float = DEFAULT_STEP_S,
    harmonic_levels=(),
    seed: int = 0,
    source_id: str = "synthetic",
    label: GridLabel | None = None,
) -> Recording:
    """Mains capture: tone following ``walk`` plus harmonics and white noise.

    ``snr_db`` is the fundamental's power over the white-noise power.
    ``harmonic_levels[i]`` is the amplitude of harmonic ``i + 2``
    relative to the fundamental.
    """
    rng = np.random.default_rng(seed)
    n = _duration_samples(walk, step_s, sample_rate_hz)
    y = _tone(_phase(walk, step_s, n, sample_rate_hz), rng, harmonic_levels)
    noise_var = 0.5 * TONE_AMPLITUDE**2 / 10 ** (snr_db / 10)
    y = y + rng.standard_normal(n) * np.sqrt(noise_var)
    return Recording(source_id, y, float(sample_rate_hz), label, SignalKind.POWER)


def speech_shaped_noise(n: int, sample_rate_hz: float, rng) -> np.ndarray:
    """White noise through a 2nd-order Butterworth low-pass at 250 Hz, unit variance."""
    w = rng.standard_normal(n)
    if SPEECH_LOWPASS_HZ < sample_rate_hz / 2:
        sos = sp_signal.butter(2, SPEECH_LOWPASS_HZ, "low", fs=sample_rate_hz, output="sos")
        w = sp_signal.sosfilt(sos, w)
    return w / np.std(w)


def render_audio(
    walk,
    sample_rate_hz: float = 1000.0,
    hum_snr_db: float = 0.0,
    background: str = "speech_shaped",
    *,
    step_s: float = DEFAULT_STEP_S,
    harmonic_levels=(),
    seed: int = 0,
    source_id: str = "synthetic",
    label: GridLabel | None = None,
    hum: bool = True,
) -> Recording:
    """Microphone take: broadband background with weak mains hum.

    ``hum_snr_db`` is the hum fundamental's power over the total
    background power.
    """
    rng = np.random.default_rng(seed)
    n = _duration_samples(walk, step_s, sample_rate_hz)
    if background == "white":
        bg = rng.standard_normal(n)
    elif background == "speech_shaped":
        bg = speech_shaped_noise(n, sample_rate_hz, rng)
    else:
        raise EnffError(f"unknown background {background!r}")
    bg_scale = 0.25
    y = bg * bg_scale
    if hum:
        tone = _tone(_phase(walk, step_s, n, sample_rate_hz), rng, harmonic_levels)
        target = bg_scale**2 * 10 ** (hum_snr_db / 10)
        y = y + tone * np.sqrt(target / (0.5 * TONE_AMPLITUDE**2))
    return Recording(source_id, y, float(sample_rate_hz), label, SignalKind.AUDIO)


def frame_truth(walk, step_s: float, times_s, frame_length_s: float, sample_rate_hz: float = 1000.0):
    """Mean instantaneous frequency over each frame starting at ``times_s``."""
    walk = np.asarray(walk, dtype=float)
    flen = int(round(frame_length_s * sample_rate_hz))
    out = []
    for t0 in np.asarray(times_s, dtype=float):
        start = int(round(t0 * sample_rate_hz))
        t = (start + np.arange(flen)) / sample_rate_hz
        out.append(np.interp(t, np.arange(walk.size) * step_s, walk).mean())
    return np.array(out)


def corpus_seed(base: int, grid_index: int, kind: SignalKind, index: int) -> int:
    """Seed of recording ``index`` of grid ``grid_index`` in a generated corpus.

    Consecutive seeds are 10 apart because rendering uses ``seed + 1``.
    """
    return base + 100_000 * grid_index + 10_000 * (kind is SignalKind.AUDIO) + 10 * index


@dataclass
class CorpusItem:
    recording: Recording
    walk: np.ndarray = field(repr=False)
    profile: GridProfile


def render_profile(
    profile: GridProfile,
    kind: SignalKind,
    minutes: float,
    seed: int,
    sample_rate_hz: float = 1000.0,
    snr_db: float | None = None,
    background: str = "speech_shaped",
    source_id: str = "synthetic",
    label: GridLabel | None = None,
) -> CorpusItem:
    """Walk plus rendering in one call, with defaults per signal kind.

    Power defaults to 40 dB tone SNR, audio to 0 dB hum SNR.
    """
    walk = synth_frequency_walk(profile, minutes * 60.0, DEFAULT_STEP_S, seed=seed)
    if kind is SignalKind.POWER:
        rec = render_power(
            walk, sample_rate_hz, 40.0 if snr_db is None else snr_db,
            harmonic_levels=profile.harmonic_levels, seed=seed + 1,
            source_id=source_id, label=label,
        )
    else:
        rec = render_audio(
            walk, sample_rate_hz, 0.0 if snr_db is None else snr_db, background,
            harmonic_levels=profile.harmonic_levels, seed=seed + 1,
            source_id=source_id, label=label,
        )
    return CorpusItem(rec, walk, profile)
