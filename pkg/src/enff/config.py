"""Pipeline configuration: defaults, JSON config files and flag overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from . import classifier, enf, filters, spectral
from .domain import EnffError

log = logging.getLogger(__name__)

CONFIG_ENV = "ENFF_CONFIG"


@dataclass(frozen=True)
class PipelineConfig:
    snr_threshold_db: float = spectral.DEFAULT_SNR_THRESHOLD_DB
    power_frame_s: float = enf.POWER_FRAMING.frame_length_s
    power_hop_s: float = enf.POWER_FRAMING.frame_hop_s
    audio_frame_s: float = enf.AUDIO_FRAMING.frame_length_s
    audio_hop_s: float = enf.AUDIO_FRAMING.frame_hop_s
    power_band_hz: tuple[float, float] = filters.POWER_BAND_HZ
    filter_order: int = filters.FILTER_ORDER
    subspace_order: int = enf.SUBSPACE_ORDER
    svm_c: float = classifier.DEFAULT_C
    svm_gamma: float | None = None
    pair_set: str = "full"
    rejection_threshold: float = classifier.DEFAULT_THRESHOLD
    sample_rate_hz: float | None = None  # needed for CSV recordings

    def __post_init__(self):
        if self.snr_threshold_db != self.snr_threshold_db:
            raise EnffError("snr threshold is NaN")
        enf.FramingPolicy(self.power_frame_s, self.power_hop_s)
        enf.FramingPolicy(self.audio_frame_s, self.audio_hop_s)
        lo, hi = self.power_band_hz
        if not 0 < lo < hi:
            raise EnffError(f"invalid power band {self.power_band_hz}")
        if self.filter_order < 1 or self.subspace_order < 3:
            raise EnffError("filter order must be >= 1 and subspace order >= 3")
        if self.svm_c <= 0 or (self.svm_gamma is not None and self.svm_gamma <= 0):
            raise EnffError("SVM C and gamma must be positive")
        if self.pair_set not in ("full", "paper"):
            raise EnffError(f"pair set must be 'full' or 'paper', got {self.pair_set!r}")
        if not 0 <= self.rejection_threshold < 1:
            raise EnffError("rejection threshold must be in [0, 1)")
        if self.sample_rate_hz is not None and self.sample_rate_hz <= 0:
            raise EnffError("sample rate must be positive")

    @property
    def power_framing(self) -> enf.FramingPolicy:
        return enf.FramingPolicy(self.power_frame_s, self.power_hop_s)

    @property
    def audio_framing(self) -> enf.FramingPolicy:
        return enf.FramingPolicy(self.audio_frame_s, self.audio_hop_s)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["power_band_hz"] = list(self.power_band_hz)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


FIELDS = {f.name for f in dataclasses.fields(PipelineConfig)}


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the JSON file (``path`` or ``$ENFF_CONFIG``), then ``overrides``.

    Overrides set to ``None`` are ignored. When an override disagrees with
    the file, the override wins and a warning is logged.
    """
    values: dict = {}
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is not None:
        try:
            values = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise EnffError(f"cannot read config {path}: {exc}") from None
        unknown = set(values) - FIELDS
        if unknown:
            raise EnffError(f"unknown config keys: {sorted(unknown)}")
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key in values and values[key] != val:
            log.warning("flag --%s=%s overrides config value %s", key.replace("_", "-"), val, values[key])
        values[key] = val
    if "power_band_hz" in values:
        values["power_band_hz"] = tuple(float(v) for v in values["power_band_hz"])
    try:
        return PipelineConfig(**values)
    except TypeError as exc:
        raise EnffError(f"bad config: {exc}") from None
