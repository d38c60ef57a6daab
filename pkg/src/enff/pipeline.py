"""Per-recording processing: separate, extract ENF, route, featurize, classify."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import classifier, enf, spectral
from .config import PipelineConfig
from .datastore import DatasetManifest, ManifestEntry, load_recording
from .domain import Category, EnffError, EnfSequence, FeatureVector, GridLabel, Recording, SeparationReport, SignalKind
from .features import compute_features

log = logging.getLogger(__name__)


@dataclass
class Analysis:
    source_id: str
    label: GridLabel | None
    report: SeparationReport | None = None
    sequence: EnfSequence | None = None
    features: FeatureVector | None = None
    error: str | None = None

    @property
    def category(self) -> Category | None:
        if self.sequence is not None:
            return self.sequence.category
        return None


def extract(recording: Recording, report: SeparationReport, cfg: PipelineConfig) -> EnfSequence:
    if report.decided_kind is SignalKind.POWER:
        seq = enf.extract_power_enf(
            recording, cfg.power_band_hz, cfg.power_framing, cfg.subspace_order, cfg.filter_order
        )
    else:
        seq = enf.extract_audio_enf(
            recording, report.dominant_frequency_hz, cfg.audio_framing, cfg.subspace_order,
            cfg.filter_order, report.band_halfwidth_hz,
        )
    enf.route_nominal(seq)
    return seq


def analyze(recording: Recording, cfg: PipelineConfig) -> Analysis:
    """Run everything up to the feature vector; failures are recorded, not raised."""
    out = Analysis(recording.id, recording.label)
    try:
        out.report = spectral.separate(recording, cfg.snr_threshold_db)
        out.sequence = extract(recording, out.report, cfg)
        out.features = compute_features(out.sequence)
    except EnffError as exc:
        out.error = str(exc)
        log.warning("%s: %s", recording.id, exc)
    return out


def load_entry(manifest: DatasetManifest, entry: ManifestEntry, cfg: PipelineConfig) -> Recording:
    rec = load_recording(manifest.resolve(entry), cfg.sample_rate_hz)
    rec.label = entry.label
    return rec


def _analyze_entry(args) -> Analysis:
    manifest, entry, cfg = args
    try:
        rec = load_entry(manifest, entry, cfg)
    except EnffError as exc:
        log.warning("%s: %s", entry.path, exc)
        return Analysis(entry.source_id, entry.label, error=str(exc))
    return analyze(rec, cfg)


def ordered_map(func, items, jobs: int = 1) -> list:
    """``map`` over ``items``, in a process pool when ``jobs > 1``; results keep input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def analyze_manifest(
    manifest: DatasetManifest, cfg: PipelineConfig, entries=None, jobs: int = 1
) -> list[Analysis]:
    entries = manifest.entries if entries is None else entries
    return ordered_map(_analyze_entry, [(manifest, e, cfg) for e in entries], jobs)


def classify(analysis: Analysis, models: dict[Category, classifier.OvoClassifier]) -> classifier.Prediction:
    """Prediction for an analysed recording; anything that failed upstream is NoG."""
    if analysis.features is None:
        return classifier.Prediction(GridLabel.NoG, 0.0, {}, analysis.source_id, analysis.category)
    cat = analysis.features.category
    if cat not in models:
        raise EnffError(f"no model for category {cat}")
    return classifier.predict(models[cat], analysis.features)


def evaluate(
    models: dict[Category, classifier.OvoClassifier],
    manifest: DatasetManifest,
    cfg: PipelineConfig,
    jobs: int = 1,
    analyses: list[Analysis] | None = None,
) -> tuple[classifier.AccuracyReport, list[classifier.Outcome], list[classifier.Prediction]]:
    entries = [e for e in manifest.entries if e.label is not None]
    if not entries:
        raise EnffError("manifest has no labeled entries to evaluate")
    if analyses is None:
        analyses = analyze_manifest(manifest, cfg, entries, jobs)
    outcomes, preds = [], []
    for entry, a in zip(entries, analyses):
        pred = classify(a, models)
        cat = a.category
        if cat is None and a.report is not None:
            cat = Category(a.report.decided_kind, entry.label.nominal_hz)
        outcomes.append(classifier.Outcome(a.source_id, entry.split.value, cat, entry.label, pred.label))
        preds.append(pred)
    return classifier.accuracy_report(outcomes), outcomes, preds
