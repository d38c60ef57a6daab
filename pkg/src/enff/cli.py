"""Command line entry point: ``enff <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, classifier, datastore, pipeline, synth
from .config import PipelineConfig, load_config
from .domain import Category, EnffError, GridLabel, SignalKind
from .features import ALL_FEATURE_NAMES, SCHEDULES, compute_features

log = logging.getLogger("enff")


class ReportWriter:
    """CSV writer that starts with a provenance comment line."""

    def __init__(self, path, cfg: PipelineConfig):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(path, "w", newline="")
        self.fh.write(f"# enff {__version__} config={cfg.digest()}\n")
        self.writer = csv.writer(self.fh, lineterminator="\n")

    def row(self, values):
        self.writer.writerow(values)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.fh.close()


def _fmt(x: float, digits: int = 6) -> str:
    return f"{x:.{digits}f}"


def _config(args, **overrides) -> PipelineConfig:
    overrides.setdefault("sample_rate_hz", getattr(args, "sample_rate", None))
    return load_config(args.config, overrides)


# -- subcommands -------------------------------------------------------------


def cmd_separate(args) -> int:
    cfg = _config(args, snr_threshold_db=args.threshold_db)
    manifest = datastore.load_manifest(args.input)
    analyses = pipeline.ordered_map(
        _separate_entry, [(manifest, e, cfg) for e in manifest.entries], args.jobs
    )
    with ReportWriter(args.report, cfg) as out:
        out.row(["source_id", "dominant_frequency_hz", "band_halfwidth_hz", "snr_db", "decided_kind", "error"])
        for entry, (rep, err) in zip(manifest.entries, analyses):
            if rep is None:
                out.row([entry.source_id, "", "", "", "", err])
            else:
                out.row([rep.source_id, _fmt(rep.dominant_frequency_hz, 1), _fmt(rep.band_halfwidth_hz, 3),
                         _fmt(rep.snr_db, 3), rep.decided_kind.value, ""])
    return 0


def _separate_entry(args):
    from .spectral import separate

    manifest, entry, cfg = args
    try:
        rec = pipeline.load_entry(manifest, entry, cfg)
        return separate(rec, cfg.snr_threshold_db), ""
    except EnffError as exc:
        return None, str(exc)


def cmd_extract(args) -> int:
    cfg = _config(args)
    manifest = datastore.load_manifest(args.input)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    analyses = pipeline.analyze_manifest(manifest, cfg, jobs=args.jobs)
    failures = 0
    plot_rows = []
    for a in analyses:
        if a.sequence is None:
            failures += 1
            continue
        datastore.save_enf(a.sequence, out_dir / f"{a.source_id}.csv")
        seq = a.sequence
        for t, f in zip(seq.times_s, seq.values_hz):
            plot_rows.append([seq.source_id, "" if seq.label is None else seq.label.value,
                              seq.signal_kind.value, seq.nominal_hz, repr(float(t)), repr(float(f - seq.nominal_hz))])
    if args.plot_data:
        with ReportWriter(args.plot_data, cfg) as out:
            out.row(["source_id", "label", "signal_kind", "nominal_hz", "time_s", "deviation_hz"])
            for r in plot_rows:
                out.row(r)
    if failures:
        log.warning("%d of %d recordings produced no ENF sequence", failures, len(analyses))
    return 0


def cmd_features(args) -> int:
    enf_dir = Path(args.enf_dir)
    vectors = []
    for path in sorted(enf_dir.glob("*.csv")):
        if not path.with_suffix(".json").exists():
            continue
        seq = datastore.load_enf(path)
        try:
            vectors.append(compute_features(seq))
        except EnffError as exc:
            log.warning("%s: %s", seq.source_id, exc)
    if not vectors:
        raise EnffError(f"no ENF sequences found in {enf_dir}")
    datastore.save_features(vectors, args.out, ALL_FEATURE_NAMES)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args, svm_c=args.C, svm_gamma=args.gamma, pair_set=args.pairs,
                  rejection_threshold=args.threshold)
    category = Category.parse(args.category)
    vectors = [v for v in datastore.load_features(args.features, SCHEDULES) if v.category == category]
    if not vectors:
        raise EnffError(f"no feature rows for category {category} in {args.features}")
    clf = classifier.train_ovo(vectors, category, cfg.pair_set, cfg.svm_c, cfg.svm_gamma, cfg.rejection_threshold)
    out = Path(args.out)
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / classifier.model_filename(category)
    classifier.save_classifier(clf, out)
    return 0


def _posterior_cell(pred: classifier.Prediction) -> str:
    return ";".join(f"{g.value}={p:.6f}" for g, p in sorted(pred.per_class.items(), key=lambda kv: kv[0].value))


def cmd_classify(args) -> int:
    cfg = _config(args)
    models = classifier.load_model_dir(args.model_dir)
    if not models:
        raise EnffError(f"no models in {args.model_dir}")
    manifest = datastore.load_manifest(args.input)
    analyses = pipeline.analyze_manifest(manifest, cfg, jobs=args.jobs)
    with ReportWriter(args.report, cfg) as out:
        out.row(["source_id", "signal_kind", "dominant_frequency_hz", "category", "predicted", "posterior",
                 "posteriors", "error"])
        for a in analyses:
            try:
                pred = pipeline.classify(a, models)
                err = a.error or ""
            except EnffError as exc:
                pred = classifier.Prediction(GridLabel.NoG, 0.0, {}, a.source_id)
                err = str(exc)
            kind = "" if a.report is None else a.report.decided_kind.value
            f_d = "" if a.report is None else _fmt(a.report.dominant_frequency_hz, 1)
            cat = "" if a.category is None else str(a.category)
            out.row([a.source_id, kind, f_d, cat, pred.label.value, _fmt(pred.posterior), _posterior_cell(pred), err])
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    models = classifier.load_model_dir(args.model_dir)
    if not models:
        raise EnffError(f"no models in {args.model_dir}")
    manifest = datastore.load_manifest(args.manifest)
    report, outcomes, _ = pipeline.evaluate(models, manifest, cfg, jobs=args.jobs)
    rows = report.rows()
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    if args.report:
        with ReportWriter(args.report, cfg) as out:
            for r in rows:
                out.row(r)
    if args.confusion:
        Path(args.confusion).write_text(json.dumps(report.confusion, indent=2, sort_keys=True) + "\n")
    return 0


def _load_profile(spec: str, kind: SignalKind) -> synth.GridProfile:
    p = Path(spec)
    if p.suffix == ".json" and p.exists():
        return synth.GridProfile.from_dict(json.loads(p.read_text()))
    return synth.get_profile(spec, kind)


def cmd_synth(args) -> int:
    kind = SignalKind.parse(args.kind)
    profile = _load_profile(args.profile, kind)
    label = GridLabel.parse(args.profile) if args.profile in "ABCDEFGHI" and len(args.profile) == 1 else None
    item = synth.render_profile(profile, kind, args.minutes, args.seed, args.rate, args.snr_db,
                                args.background, Path(args.out).stem, label)
    datastore.save_wav(item.recording, args.out)
    if args.truth:
        np.savetxt(args.truth, item.walk, fmt="%.12f", header=f"step_s={synth.DEFAULT_STEP_S}")
    return 0


def cmd_synth_corpus(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grids = args.grids or list(synth.builtin_profiles())
    kinds = [SignalKind.parse(k) for k in args.kinds.split(",")]
    entries = []
    n_per = args.train + args.test
    for gi, grid in enumerate(grids):
        for kind in kinds:
            profile = synth.get_profile(grid, kind)
            for i in range(n_per):
                split = datastore.Split.TRAIN if i < args.train else datastore.Split.TEST
                name = f"{grid}_{kind.value}_{i:03d}"
                seed = synth.corpus_seed(args.seed, gi, kind, i)
                item = synth.render_profile(profile, kind, args.minutes, seed, args.rate,
                                            source_id=name, label=GridLabel.parse(grid))
                datastore.save_wav(item.recording, out / f"{name}.wav")
                entries.append(datastore.ManifestEntry(f"{name}.wav", GridLabel.parse(grid), split))
    all_m = datastore.DatasetManifest(entries)
    datastore.save_manifest(all_m, out / "manifest.csv")
    datastore.save_manifest(datastore.DatasetManifest(all_m.split(datastore.Split.TRAIN)), out / "train.csv")
    datastore.save_manifest(datastore.DatasetManifest(all_m.split(datastore.Split.TEST)), out / "test.csv")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (default: $ENFF_CONFIG)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for per-recording work")
    common.add_argument("--sample-rate", type=float, help="sample rate for CSV recordings")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="enff", description="ENF-based location forensics")
    parser.add_argument("--version", action="version", version=f"enff {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("separate", parents=[common], help="classify recordings as power or audio")
    p.add_argument("--input", required=True, help="manifest CSV")
    p.add_argument("--threshold-db", type=float)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("extract", parents=[common], help="extract ENF sequences")
    p.add_argument("--input", required=True, help="manifest CSV")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--plot-data", help="CSV of ENF deviations for plotting")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("features", parents=[common], help="compute feature vectors from ENF files")
    p.add_argument("--enf-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[common], help="train a one-vs-one classifier for one category")
    p.add_argument("--features", required=True)
    p.add_argument("--category", required=True, help="e.g. power:60")
    p.add_argument("--pairs", choices=["full", "paper"])
    p.add_argument("--C", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--threshold", type=float, help="NoG rejection threshold")
    p.add_argument("--out", required=True, help="model .json file or directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common], help="attribute recordings to grids")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--input", required=True, help="manifest CSV")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", parents=[common], help="accuracy on a labeled manifest")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", help="write the accuracy table as CSV")
    p.add_argument("--confusion", help="write confusion matrices as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", parents=[common], help="render one synthetic recording")
    p.add_argument("--profile", required=True, help="built-in grid name (A-I) or profile JSON")
    p.add_argument("--minutes", type=float, default=10.0)
    p.add_argument("--kind", choices=["power", "audio"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=1000.0)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--background", choices=["white", "speech_shaped"], default="speech_shaped")
    p.add_argument("--truth", help="also write the ground-truth frequency walk")
    p.add_argument("--out", required=True, help="output WAV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("synth-corpus", parents=[common], help="render a labeled synthetic corpus with manifests")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grids", nargs="*")
    p.add_argument("--kinds", default="power,audio")
    p.add_argument("--train", type=int, default=20)
    p.add_argument("--test", type=int, default=10)
    p.add_argument("--minutes", type=float, default=10.0)
    p.add_argument("--rate", type=float, default=1000.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EnffError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
