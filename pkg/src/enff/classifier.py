"""One-vs-one grid attribution with posterior-based rejection."""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as feat
from .domain import Category, EnffError, EnfSequence, FeatureVector, GridLabel, SeparationReport
from .svm import BinarySvmModel, rbf_kernel, train_binary

log = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 2
DEFAULT_C = 10.0
DEFAULT_THRESHOLD = 0.6
COUPLING_MAX_ITER = 100
COUPLING_TOL = 1e-6
PROB_CLIP = 1e-7

_L = GridLabel
PAPER_PAIRS: dict[Category, list[tuple[GridLabel, GridLabel]]] = {
    feat.P60: [(_L.A, _L.C), (_L.A, _L.I), (_L.C, _L.I)],
    feat.P50: [(_L.B, _L.F), (_L.H, _L.F), (_L.E, _L.F), (_L.D, _L.F), (_L.G, _L.F)],
    feat.A60: [(_L.A, _L.C), (_L.A, _L.I), (_L.C, _L.I)],
    feat.A50: [(_L.B, _L.F), (_L.D, _L.E), (_L.G, _L.H)],
}


def full_pairs(labels) -> list[tuple[GridLabel, GridLabel]]:
    return list(itertools.combinations(sorted(set(labels), key=lambda g: g.value), 2))


def resolve_pairs(preset, category: Category, labels) -> list[tuple[GridLabel, GridLabel]]:
    """``"full"``, ``"paper"`` or an explicit list of label pairs."""
    if preset == "full":
        return full_pairs(labels)
    if preset == "paper":
        return list(PAPER_PAIRS[category])
    return [(GridLabel.parse(str(a)), GridLabel.parse(str(b))) for a, b in preset]


@dataclass
class Prediction:
    label: GridLabel
    posterior: float
    per_class: dict[GridLabel, float]
    source_id: str = ""
    category: Category | None = None


@dataclass
class OvoClassifier:
    category: Category
    models: list[BinarySvmModel]
    labels: list[GridLabel]
    feature_names: list[str]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    rejection_threshold: float = DEFAULT_THRESHOLD
    meta: dict = field(default_factory=dict)
    # normalised training points and the kernel floor used by support()
    support_points: np.ndarray | None = None
    support_gamma: float = 0.0
    support_floor: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rejection_threshold < 1.0:
            raise EnffError("rejection threshold must be in [0, 1)")

    def normalize(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.norm_mean) / self.norm_std

    def support(self, z: np.ndarray) -> float:
        """How well the training data covers ``z``, in [0, 1].

        1 when ``z`` is at least as close (in kernel terms) to some training
        point as the most isolated training point is to its neighbour;
        falls towards 0 far from the data, where every kernel term vanishes.
        """
        if self.support_points is None or len(self.support_points) == 0:
            return 1.0
        k = float(np.max(rbf_kernel(z, self.support_points, self.support_gamma)))
        if self.support_floor <= 0:
            return 1.0 if k > 0 else 0.0
        return min(1.0, k / self.support_floor)

    def pairwise(self, z: np.ndarray) -> dict[tuple[GridLabel, GridLabel], float]:
        """Platt probability of each pair's first class, shrunk towards 1/2 by :meth:`support`.

        Far from the training data every decision value collapses to the
        model bias, which says nothing about the sample; the shrinkage
        turns that into an uninformative 1/2.
        """
        w = self.support(z)
        return {m.class_pair: 0.5 + (float(m.probability(z)[0]) - 0.5) * w for m in self.models}

    def posteriors(self, values) -> dict[GridLabel, float]:
        z = self.normalize(values)
        probs = couple(self.labels, self.pairwise(z))
        return dict(zip(self.labels, probs))

    def to_dict(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "category": str(self.category),
            "labels": [g.value for g in self.labels],
            "feature_names": list(self.feature_names),
            "normalization": {"mean": self.norm_mean.tolist(), "std": self.norm_std.tolist()},
            "rejection_threshold": self.rejection_threshold,
            "models": [m.to_dict() for m in self.models],
            "support": {
                "points": [] if self.support_points is None else self.support_points.tolist(),
                "gamma": self.support_gamma,
                "kernel_floor": self.support_floor,
            },
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> OvoClassifier:
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise EnffError(f"unsupported model schema version {d.get('schema_version')!r}")
        return cls(
            category=Category.parse(d["category"]),
            models=[BinarySvmModel.from_dict(m) for m in d["models"]],
            labels=[GridLabel.parse(g) for g in d["labels"]],
            feature_names=list(d["feature_names"]),
            norm_mean=np.array(d["normalization"]["mean"], dtype=float),
            norm_std=np.array(d["normalization"]["std"], dtype=float),
            rejection_threshold=float(d["rejection_threshold"]),
            meta=dict(d.get("meta", {})),
            support_points=np.array(d["support"]["points"], dtype=float).reshape(
                len(d["support"]["points"]), len(d["feature_names"])
            ),
            support_gamma=float(d["support"]["gamma"]),
            support_floor=float(d["support"]["kernel_floor"]),
        )


def save_classifier(clf: OvoClassifier, path) -> None:
    Path(path).write_text(json.dumps(clf.to_dict(), indent=1, sort_keys=True) + "\n")


def load_classifier(path) -> OvoClassifier:
    try:
        return OvoClassifier.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise EnffError(f"cannot load model {path}: {exc}") from None


def model_filename(category: Category) -> str:
    return f"{category.kind.value}_{category.nominal_hz}.json"


def load_model_dir(directory) -> dict[Category, OvoClassifier]:
    out = {}
    for p in sorted(Path(directory).glob("*.json")):
        clf = load_classifier(p)
        if clf.category in out:
            raise EnffError(f"two models for category {clf.category} in {directory}")
        out[clf.category] = clf
    return out


def couple(labels: list[GridLabel], pairwise: dict[tuple[GridLabel, GridLabel], float]) -> np.ndarray:
    """Combine pairwise probabilities into one class distribution.

    ``pairwise[(a, b)]`` is P(a | a or b). Iteratively rescales the class
    probabilities until the implied pairwise ratios ``p_a / (p_a + p_b)``
    match the observed ones (100 sweeps or 1e-6 change). Pairs that were
    not trained simply do not contribute.
    """
    k = len(labels)
    idx = {g: i for i, g in enumerate(labels)}
    r = np.zeros((k, k))
    has = np.zeros((k, k), dtype=bool)
    for (a, b), p in pairwise.items():
        p = min(max(p, PROB_CLIP), 1 - PROB_CLIP)
        i, j = idx[a], idx[b]
        r[i, j], r[j, i] = p, 1 - p
        has[i, j] = has[j, i] = True
    p = np.full(k, 1.0 / k)
    if k == 1:
        return p
    for _ in range(COUPLING_MAX_ITER):
        prev = p.copy()
        for i in range(k):
            js = has[i]
            if not np.any(js):
                continue
            mu = p[i] / (p[i] + p[js])
            p[i] *= r[i, js].sum() / mu.sum()
            p /= p.sum()
        if np.max(np.abs(p - prev)) < COUPLING_TOL:
            break
    return p / p.sum()


def default_gamma(Z: np.ndarray) -> float:
    """``1 / (n_features * variance)`` of the normalised training features."""
    var = float(np.var(Z))
    d = Z.shape[1]
    return 1.0 / (d * var) if var > 0 else 1.0 / d


def _sorted_dataset(dataset: list[FeatureVector]) -> list[FeatureVector]:
    return sorted(dataset, key=lambda v: (v.label.value, tuple(v.values.tolist()), v.source_id))


def _connected(labels, pairs) -> bool:
    seen = {labels[0]}
    frontier = [labels[0]]
    while frontier:
        g = frontier.pop()
        for a, b in pairs:
            for u, v in ((a, b), (b, a)):
                if u is g and v not in seen:
                    seen.add(v)
                    frontier.append(v)
    return len(seen) == len(labels)


def train_ovo(
    dataset: list[FeatureVector],
    category: Category,
    pair_set="full",
    C: float = DEFAULT_C,
    gamma: float | None = None,
    rejection_threshold: float = DEFAULT_THRESHOLD,
) -> OvoClassifier:
    """One binary model per label pair, over a shared z-score normalisation.

    Only vectors of ``category`` are used. The normalisation is computed
    on all of them, including labels outside ``pair_set``.
    """
    data = [v for v in dataset if v.category == category]
    if any(v.label is None or v.label is GridLabel.NoG for v in data):
        raise EnffError("training vectors need grid labels")
    if not data:
        raise EnffError(f"no training vectors for category {category}")
    data = _sorted_dataset(data)
    names = data[0].names
    X = np.vstack([v.values for v in data])
    y = [v.label for v in data]

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (X - mean) / std
    if gamma is None:
        gamma = default_gamma(Z)

    pairs = resolve_pairs(pair_set, category, y)
    if not pairs:
        raise EnffError(f"no label pairs to train for {category}")
    models = []
    for a, b in pairs:
        Pa = Z[[i for i, g in enumerate(y) if g is a]]
        Pb = Z[[i for i, g in enumerate(y) if g is b]]
        if len(Pa) == 0 or len(Pb) == 0:
            raise EnffError(f"pair {a.value}{b.value}: missing training samples for category {category}")
        models.append(train_binary(Pa, Pb, C, gamma, class_pair=(a, b)))
    labels = sorted({g for pair in pairs for g in pair}, key=lambda g: g.value)
    if not _connected(labels, pairs):
        log.warning(
            "%s: the pair graph is disconnected, so posteriors cannot rank classes across "
            "components and most predictions will fall below the rejection threshold", category,
        )
    K = rbf_kernel(Z, Z, gamma)
    np.fill_diagonal(K, -np.inf)
    floor = float(np.min(np.max(K, axis=1))) if len(Z) > 1 else 0.0
    return OvoClassifier(
        category, models, labels, list(names), mean, std, rejection_threshold,
        meta={"C": C, "gamma": gamma, "pairs": [a.value + b.value for a, b in pairs]},
        support_points=Z, support_gamma=float(gamma), support_floor=max(floor, 0.0),
    )


def predict(classifier: OvoClassifier, features: FeatureVector, threshold: float | None = None) -> Prediction:
    """Most probable grid, or NoG when its coupled posterior is below the threshold.

    Equal posteriors resolve to the alphabetically first grid.
    """
    if features.category != classifier.category:
        raise EnffError(f"feature category {features.category} does not match model {classifier.category}")
    thr = classifier.rejection_threshold if threshold is None else threshold
    post = classifier.posteriors(features.values)
    ranked = sorted(post.items(), key=lambda kv: (-kv[1], kv[0].value))
    best, p = ranked[0]
    label = best if p >= thr else GridLabel.NoG
    return Prediction(label, float(p), post, features.source_id, features.category)


def route_and_predict(
    report: SeparationReport,
    sequence: EnfSequence,
    model_set: dict[Category, OvoClassifier] | list[OvoClassifier],
) -> Prediction:
    """Pick the classifier for (decided kind, sequence nominal), then predict."""
    if not isinstance(model_set, dict):
        model_set = {c.category: c for c in model_set}
    category = Category(report.decided_kind, sequence.nominal_hz)
    if category not in model_set:
        raise EnffError(f"no model for category {category}")
    routed = dataclasses.replace(sequence, signal_kind=report.decided_kind)
    return predict(model_set[category], feat.compute_features(routed))


CATEGORY_ORDER = [feat.P60, feat.P50, feat.A60, feat.A50]


@dataclass
class Outcome:
    source_id: str
    split: str
    category: Category | None
    truth: GridLabel
    predicted: GridLabel


@dataclass
class AccuracyReport:
    """Accuracies in percent, laid out like the train/test table per category."""

    cells: dict[tuple[str, str], float | None]
    overall: dict[str, float | None]
    confusion: dict[str, dict[str, dict[str, int]]]
    counts: dict[tuple[str, str], int]

    def rows(self) -> list[list[str]]:
        def fmt(v):
            return "" if v is None else f"{v:.2f}"

        out = [["category", "split", "n", "accuracy_pct"]]
        for cat in CATEGORY_ORDER:
            for split in ("Train", "Test"):
                key = (str(cat), split)
                out.append([str(cat), split, str(self.counts.get(key, 0)), fmt(self.cells.get(key))])
        for split in ("Train", "Test"):
            out.append(["overall", split, str(self.counts.get(("overall", split), 0)), fmt(self.overall.get(split))])
        return out


def accuracy_report(outcomes: list[Outcome]) -> AccuracyReport:
    """Per-category and overall accuracy plus confusion counts (NoG included).

    An outcome is filed under the category of its true grid and the
    decided signal kind; a misrouted or rejected recording counts as an
    error.
    """
    if not outcomes:
        raise EnffError("no outcomes to evaluate")
    cells, counts, overall = {}, {}, {}
    confusion: dict[str, dict[str, dict[str, int]]] = {}
    for split in ("Train", "Test"):
        rows = [o for o in outcomes if o.split == split]
        counts[("overall", split)] = len(rows)
        overall[split] = 100.0 * np.mean([o.truth is o.predicted for o in rows]) if rows else None
        for cat in CATEGORY_ORDER:
            sel = [o for o in rows if o.category == cat]
            key = (str(cat), split)
            counts[key] = len(sel)
            cells[key] = 100.0 * np.mean([o.truth is o.predicted for o in sel]) if sel else None
    for o in outcomes:
        cat = str(o.category) if o.category is not None else "unrouted"
        table = confusion.setdefault(f"{cat}/{o.split}", {})
        row = table.setdefault(o.truth.value, {})
        row[o.predicted.value] = row.get(o.predicted.value, 0) + 1
    return AccuracyReport(cells, overall, confusion, counts)
