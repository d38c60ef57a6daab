"""Flat-file ingestion and persistence.

Recordings come in as mono PCM16 WAV or single-column CSV. Intermediate
artifacts (ENF sequences, feature tables) are written as CSV so they can
be diffed; numbers are printed with ``repr`` precision, which round-trips
float64 exactly.
"""

from __future__ import annotations

import csv
import enum
import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    Category,
    EnffError,
    EnfSequence,
    FeatureVector,
    FormatError,
    GridLabel,
    Recording,
    SignalKind,
)

MANIFEST_FORMAT_VERSION = 1
MANIFEST_HEADER = ["path", "label", "split"]
ENF_HEADER = ["frame_index", "time_start_s", "frequency_hz"]


class Split(str, enum.Enum):
    TRAIN = "Train"
    TEST = "Test"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: GridLabel | None
    split: Split

    @property
    def source_id(self) -> str:
        return Path(self.path).stem


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    format_version: int = MANIFEST_FORMAT_VERSION
    root: Path = field(default_factory=Path)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def split(self, split: Split) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split is split]


def _fmt(x: float) -> str:
    return repr(float(x))


# -- recordings -------------------------------------------------------------


def load_recording(path, sample_rate_override: float | None = None) -> Recording:
    """Load a mono 16-bit WAV or a single-column CSV of samples.

    WAV samples are scaled by 1/32768. CSV files carry no rate, so
    ``sample_rate_override`` is mandatory for them; for WAV it replaces
    the header rate.
    """
    path = Path(path)
    if not path.is_file():
        raise FormatError("file not found", str(path))
    if sample_rate_override is not None and not sample_rate_override > 0:
        raise EnffError(f"sample rate must be positive, got {sample_rate_override}")

    if path.suffix.lower() == ".wav":
        samples, rate = _read_wav(path)
        if sample_rate_override is not None:
            rate = float(sample_rate_override)
    else:
        if sample_rate_override is None:
            raise FormatError("CSV recordings need an explicit sample rate", str(path))
        samples = _read_sample_csv(path)
        rate = float(sample_rate_override)
    return Recording(id=path.stem, samples=samples, sample_rate_hz=rate)


def _read_wav(path: Path) -> tuple[np.ndarray, float]:
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            if w.getcomptype() != "NONE":
                raise FormatError("only uncompressed PCM is supported", str(path))
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"unreadable WAV: {exc}", str(path)) from None
    if channels != 1:
        raise FormatError(f"expected mono WAV, got {channels} channels", str(path))
    if width != 2:
        raise FormatError(f"expected 16-bit PCM, got {8 * width}-bit", str(path))
    data = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    if data.size == 0:
        raise FormatError("WAV has no samples", str(path))
    return data, float(rate)


def _read_sample_csv(path: Path) -> np.ndarray:
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 1:
                raise FormatError(f"expected one column, got {len(row)}", str(path), lineno)
            try:
                values.append(float(row[0]))
            except ValueError:
                raise FormatError(f"non-numeric sample {row[0]!r}", str(path), lineno) from None
    if not values:
        raise FormatError("no samples", str(path))
    return np.array(values)


def save_wav(recording: Recording, path) -> None:
    """Write a recording as mono PCM16, clipping to the int16 range."""
    ints = np.clip(np.round(recording.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(recording.sample_rate_hz)))
        w.writeframes(ints.tobytes())


# -- manifests --------------------------------------------------------------


def load_manifest(path) -> DatasetManifest:
    """Parse a ``path,label,split`` manifest.

    All problems are collected and raised together as a single
    :class:`FormatError`, one diagnostic per offending line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read manifest: {exc}", str(path)) from None

    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            rows.extend(csv.reader([line]))
        except csv.Error as exc:
            raise FormatError(f"unparseable line: {exc}", str(path), lineno) from None
    if not rows or [c.strip() for c in rows[0]] != MANIFEST_HEADER:
        raise FormatError("manifest header must be 'path,label,split'", str(path), 1)

    problems: list[str] = []
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            problems.append(f"line {lineno}: expected 3 fields, got {len(row)}")
            continue
        p, lab, sp = (c.strip() for c in row)
        if not p:
            problems.append(f"line {lineno}: empty path")
            continue
        if p in seen:
            problems.append(f"line {lineno}: duplicate path {p!r} (first on line {seen[p]})")
            continue
        try:
            split = Split(sp.capitalize())
        except ValueError:
            problems.append(f"line {lineno}: unknown split {sp!r}")
            continue
        label = None
        if lab:
            try:
                label = GridLabel.parse(lab)
            except EnffError:
                problems.append(f"line {lineno}: unknown label {lab!r}")
                continue
        if split is Split.TRAIN and (label is None or label is GridLabel.NoG):
            problems.append(f"line {lineno}: Train entry {p!r} needs a grid label")
            continue
        seen[p] = lineno
        entries.append(ManifestEntry(p, label, split))

    if problems:
        raise FormatError("invalid manifest\n  " + "\n  ".join(problems), str(path))
    return DatasetManifest(entries, MANIFEST_FORMAT_VERSION, path.parent)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            w.writerow([e.path, "" if e.label is None else e.label.value, e.split.value])


# -- ENF sequences ----------------------------------------------------------


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_enf(sequence: EnfSequence, path) -> None:
    """Write ``<path>`` (CSV) and ``<path stem>.json`` (metadata sidecar)."""
    if len(sequence) == 0:
        raise EnffError(f"refusing to save empty ENF sequence {sequence.source_id!r}")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENF_HEADER)
        for i, t, f in zip(sequence.frame_index, sequence.times_s, sequence.values_hz):
            w.writerow([int(i), _fmt(t), _fmt(f)])
    meta = {
        "nominal_hz": int(sequence.nominal_hz),
        "signal_kind": sequence.signal_kind.value,
        "source_id": sequence.source_id,
        "frame_length_s": float(sequence.frame_length_s),
        "frame_hop_s": float(sequence.frame_hop_s),
        "label": None if sequence.label is None else sequence.label.value,
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_enf(path) -> EnfSequence:
    path = Path(path)
    try:
        meta = json.loads(_sidecar(path).read_text())
        lines = path.read_text().splitlines()
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read ENF file: {exc}", str(path)) from None
    rows = list(csv.reader(lines))
    if not rows or rows[0] != ENF_HEADER:
        raise FormatError("bad ENF header", str(path), 1)
    idx, times, vals = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            i, t, f = row
            idx.append(int(i))
            times.append(float(t))
            vals.append(float(f))
        except ValueError:
            raise FormatError(f"malformed row {row!r}", str(path), lineno) from None
    if not vals:
        raise FormatError("ENF file has no rows", str(path))
    try:
        return EnfSequence(
            values_hz=np.array(vals),
            times_s=np.array(times),
            frame_index=np.array(idx),
            frame_length_s=float(meta["frame_length_s"]),
            frame_hop_s=float(meta["frame_hop_s"]),
            nominal_hz=int(meta["nominal_hz"]),
            signal_kind=SignalKind.parse(meta["signal_kind"]),
            source_id=str(meta["source_id"]),
            label=GridLabel.parse(meta["label"]) if meta.get("label") else None,
        )
    except KeyError as exc:
        raise FormatError(f"sidecar missing field {exc}", str(_sidecar(path))) from None


# -- feature tables ---------------------------------------------------------


def save_features(vectors: list[FeatureVector], path, columns: list[str]) -> None:
    """Write a wide feature table.

    ``columns`` is the union of feature names; a vector leaves the columns
    outside its category's schedule empty.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_id", "category", "label", *columns])
        for v in vectors:
            cells = dict(zip(v.names, v.values))
            w.writerow(
                [
                    v.source_id,
                    str(v.category),
                    "" if v.label is None else v.label.value,
                    *(_fmt(cells[c]) if c in cells else "" for c in columns),
                ]
            )


def load_features(path, schedules: dict[Category, list[str]]) -> list[FeatureVector]:
    """Read a table written by :func:`save_features`.

    ``schedules`` maps each category to its ordered feature names, which
    selects and orders the columns per row.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["source_id", "category", "label"]:
        raise FormatError("feature table needs source_id,category,label columns", str(path), 1)
    header = rows[0]
    col = {name: i for i, name in enumerate(header)}
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            cat = Category.parse(row[1])
            names = schedules[cat]
            vals = [float(row[col[n]]) for n in names]
            label = GridLabel.parse(row[2]) if row[2] else None
        except (KeyError, IndexError, ValueError) as exc:
            raise FormatError(f"bad feature row: {exc}", str(path), lineno) from None
        out.append(FeatureVector(cat, list(names), np.array(vals), row[0], label))
    return out
