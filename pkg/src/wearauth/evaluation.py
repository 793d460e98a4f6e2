"""Balanced leave-one-out evaluation, metrics, and confidence sweeps.

Genuine instances are labelled 0 and imposter instances 1. Throughout,
"positive" means *accepted as genuine*: a false positive is an imposter that
was let in, a false negative a genuine user who was rejected.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from . import augment
from .errors import ConfigError, DataError
from .features import (BREATH, GAIT, GAIT_NAMES, HR, MFCC_NAMES, STAT_NAMES, FeatureVector, MfccConfig,
                       fuse_instance, gait_features, mfcc_features, stat_features)
from .ingest import DEFAULT_WINDOW, AudioClip, EventConfig, GaitStream, TimeSeries, extract_breath_events, segment_windows
from .learn import GENUINE, IMPOSTER, ClassifierSpec, grid_search, train
from .select import run_selector

log = logging.getLogger(__name__)

METRICS = ("ACC", "RMSE", "FPR", "FNR", "F1", "AUC")
DEFAULT_TAUS = tuple(round(0.1 * i, 1) for i in range(11))

FAMILY_BIOMETRICS = {
    "HR": (HR,),
    "HRG": (HR, GAIT),
    "HRB": (HR, BREATH),
    "HRGB": (HR, GAIT, BREATH),
}
_GROUP_NAMES = {HR: set(STAT_NAMES), GAIT: set(GAIT_NAMES), BREATH: set(MFCC_NAMES)}

# best configurations reported for each model family
FAMILY_DEFAULTS = {
    "HR": (ClassifierSpec("svm", {"kernel": "poly", "degree": 2, "C": 1.0}), "k_best"),
    "HRG": (ClassifierSpec("random_forest", {"n_estimators": 500}), "from_model"),
    "HRB": (ClassifierSpec("knn", {"k": 6}), "k_best"),
    "HRGB": (ClassifierSpec("knn", {"k": 2}), "k_best"),
}


# ----------------------------------------------------------------- dataset

@dataclass
class LabeledDataset:
    """Instances as a feature matrix plus per-row label and lineage.

    Every augmented row shares its ``origin_id`` with exactly one
    non-augmented (original) row.
    """

    X: np.ndarray
    names: tuple
    labels: np.ndarray
    subject_ids: np.ndarray
    origin_ids: np.ndarray
    is_augmented: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.names = tuple(self.names)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subject_ids = np.asarray(self.subject_ids, dtype=object)
        self.origin_ids = np.asarray(self.origin_ids, dtype=object)
        self.is_augmented = np.asarray(self.is_augmented, dtype=bool)
        n = self.X.shape[0]
        if self.X.ndim != 2 or self.X.shape[1] != len(self.names):
            raise DataError("feature matrix does not match the name list")
        if not all(a.shape == (n,) for a in (self.labels, self.subject_ids, self.origin_ids, self.is_augmented)):
            raise DataError("dataset columns are not aligned")
        originals = Counter(self.origin_ids[~self.is_augmented])
        dup = [o for o, c in originals.items() if c > 1]
        if dup:
            raise DataError("origin ids with several originals: %s" % dup[:3])
        orphans = set(self.origin_ids[self.is_augmented]) - set(originals)
        if orphans:
            raise DataError("augmented rows without an original: %s" % sorted(orphans)[:3])

    def __len__(self):
        return self.X.shape[0]

    @classmethod
    def from_vectors(cls, vectors, labels, is_augmented=None) -> "LabeledDataset":
        vectors = list(vectors)
        if not vectors:
            raise DataError("no instances")
        names = vectors[0].names
        for v in vectors:
            if v.names != names:
                raise DataError("instances have differing feature layouts")
        aug = np.zeros(len(vectors), bool) if is_augmented is None else is_augmented
        return cls(np.stack([v.values for v in vectors]), names, labels,
                   [v.subject_id for v in vectors], [v.origin_id for v in vectors], aug)

    @property
    def instances(self) -> list[FeatureVector]:
        bio = {b for b, group in _GROUP_NAMES.items() if group & set(self.names)}
        return [FeatureVector(self.names, x, bio, s, o)
                for x, s, o in zip(self.X, self.subject_ids, self.origin_ids)]

    def columns(self, biometrics) -> "LabeledDataset":
        """Restrict to the feature groups of ``biometrics`` (HR, GAIT, BREATH)."""
        wanted = set().union(*(_GROUP_NAMES[b] for b in biometrics))
        keep = [i for i, n in enumerate(self.names) if n in wanted]
        missing = [b for b in biometrics if not _GROUP_NAMES[b] & set(self.names)]
        if missing:
            raise ConfigError("dataset has no %s features" % ", ".join(missing))
        return LabeledDataset(self.X[:, keep], tuple(self.names[i] for i in keep), self.labels,
                              self.subject_ids, self.origin_ids, self.is_augmented)


@dataclass
class SubjectData:
    subject_id: str
    hr: TimeSeries | None = None
    gait: GaitStream | None = None
    clips: list = field(default_factory=list)


def _require(subjects, biometrics, family):
    for s in subjects:
        if HR in biometrics and s.hr is None:
            raise ConfigError("family %s requires heart-rate data; subject %r has none" % (family, s.subject_id))
        if GAIT in biometrics and s.gait is None:
            raise ConfigError("family %s requires gait data; subject %r has none" % (family, s.subject_id))
        if BREATH in biometrics and not s.clips:
            raise ConfigError("family %s requires breathing audio; subject %r has none" % (family, s.subject_id))


def _order_subjects(subjects, genuine):
    ids = [s.subject_id for s in subjects]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate subject ids")
    if genuine is None:
        genuine = ids[0]
    if genuine not in ids:
        raise ConfigError("genuine subject %r not among %s" % (genuine, ids))
    if len(ids) < 3:
        raise DataError("need the genuine subject and at least two imposters, got %d subjects" % len(ids))
    return sorted(subjects, key=lambda s: s.subject_id != genuine), genuine


def build_window_dataset(subjects, genuine=None, biometrics=(HR, GAIT), window=DEFAULT_WINDOW,
                         max_originals=None) -> LabeledDataset:
    """One instance per window; heart-rate window ``i`` is paired with gait window ``i``."""
    subjects, genuine = _order_subjects(list(subjects), genuine)
    _require(subjects, biometrics, "+".join(biometrics))
    vectors, labels = [], []
    for s in subjects:
        parts = []
        if HR in biometrics:
            parts.append(segment_windows(s.hr, window))
        if GAIT in biometrics:
            parts.append(s.gait.windows(window))
        n = min(len(p) for p in parts)
        if max_originals is not None:
            n = min(n, max_originals)
        for i in range(n):
            origin = "%s/w%d" % (s.subject_id, i)
            pieces = []
            if HR in biometrics:
                pieces.append(stat_features(parts[0][i], s.subject_id, origin))
            if GAIT in biometrics:
                pieces.append(gait_features(parts[-1][i], origin))
            vectors.append(fuse_instance(pieces, origin))
            labels.append(GENUINE if s.subject_id == genuine else IMPOSTER)
    return LabeledDataset.from_vectors(vectors, labels)


def build_event_dataset(subjects, genuine=None, biometrics=(HR, GAIT, BREATH), window=DEFAULT_WINDOW,
                        augment_events=True, event_cfg=EventConfig(), mfcc_cfg=MfccConfig(),
                        max_events=None) -> LabeledDataset:
    """One instance per breathing event variant.

    Each original event and its 21 non-identity variants share the event's
    origin id. Variant ``u`` (counted across all of a subject's events) is
    paired with heart-rate and gait window ``u``, wrapping around when the
    streams are too short.
    """
    subjects, genuine = _order_subjects(list(subjects), genuine)
    biometrics = tuple(b for b in (HR, GAIT, BREATH) if b in biometrics)
    _require(subjects, biometrics, "+".join(biometrics))
    vectors, labels, aug = [], [], []
    for s in subjects:
        events = [e for c in s.clips for e in extract_breath_events(c, event_cfg)]
        if max_events is not None:
            events = events[:max_events]
        if not events:
            raise DataError("no breathing events found for subject %r" % s.subject_id)
        hr_w = segment_windows(s.hr, window) if HR in biometrics else []
        g_w = s.gait.windows(window) if GAIT in biometrics else []
        u = 0
        for ev in events:
            variants = augment.augment_breath_event(ev) if augment_events else [(augment.AugmentSpec("pitch", 0.0), ev)]
            for spec, clip in variants:
                pieces = []
                if HR in biometrics:
                    pieces.append(stat_features(hr_w[u % len(hr_w)], s.subject_id))
                if GAIT in biometrics:
                    pieces.append(gait_features(g_w[u % len(g_w)]))
                pieces.append(mfcc_features(clip, mfcc_cfg, pad=True))
                vectors.append(fuse_instance(pieces, ev.origin_id))
                labels.append(GENUINE if s.subject_id == genuine else IMPOSTER)
                aug.append(not spec.is_identity)
                u += 1
        short = [len(w) for w in (hr_w, g_w) if w and len(w) < u]
        if short:
            log.warning("subject %r: %d event variants reuse %d windows", s.subject_id, u, min(short))
    return LabeledDataset.from_vectors(vectors, labels, aug)


# --------------------------------------------------------------- LOO plan

@dataclass
class LooPlan:
    iterations: list  # of (train_idx, test_idx) integer arrays

    def __len__(self):
        return len(self.iterations)


def _originals(data: LabeledDataset, mask) -> list[str]:
    seen, out = set(), []
    for o, a, m in zip(data.origin_ids, data.is_augmented, mask):
        if m and not a and o not in seen:
            seen.add(o)
            out.append(o)
    return out


def loo_plan(data: LabeledDataset, n_genuine: int | None = None, n_features: int | None = None,
             strict: bool = False, min_ratio: float = 10.0) -> LooPlan:
    """Balanced leave-one-out plan over original instances.

    Iteration ``i`` tests genuine original ``i`` and one imposter original,
    cycling through imposter subjects, each together with its augmented
    descendants. Training holds the other ``N-1`` genuine originals and
    ``N-1`` imposter originals split as evenly as possible between imposter
    subjects, with the larger share rotating between them.
    """
    genuine = _originals(data, data.labels == GENUINE)
    if n_genuine is not None:
        genuine = genuine[:n_genuine]
    N = len(genuine)
    if N < 2:
        raise DataError("leave-one-out needs at least 2 genuine originals, got %d" % N)
    imp_subjects = list(dict.fromkeys(data.subject_ids[data.labels == IMPOSTER]))
    if len(imp_subjects) < 2:
        raise DataError("need at least two imposter subjects, got %d" % len(imp_subjects))
    imp_orig = {s: _originals(data, (data.subject_ids == s) & (data.labels == IMPOSTER)) for s in imp_subjects}
    n_feat = data.X.shape[1] if n_features is None else n_features
    if len(data) < min_ratio * n_feat:
        msg = "only %d instances for %d features (< %gx)" % (len(data), n_feat, min_ratio)
        if strict:
            raise DataError(msg)
        log.warning(msg)
    rows_by_origin = {}
    for r, o in enumerate(data.origin_ids):
        rows_by_origin.setdefault(o, []).append(r)
    m = len(imp_subjects)
    iterations = []
    for i in range(N):
        test_subject = imp_subjects[i % m]
        pool = imp_orig[test_subject]
        test_imp = pool[(i // m) % len(pool)]
        test = [genuine[i], test_imp]
        train_orig = genuine[:i] + genuine[i + 1:]
        base, extra = divmod(N - 1, m)
        for q, s in enumerate(imp_subjects):
            count = base + (1 if (q - i) % m < extra else 0)
            cands = [o for o in imp_orig[s] if o != test_imp]
            if len(cands) < count:
                raise DataError("imposter %r has %d originals, %d needed for training" % (s, len(cands), count))
            off = i % len(cands) if cands else 0
            train_orig += (cands[off:] + cands[:off])[:count]
        tr = np.array(sorted(r for o in train_orig for r in rows_by_origin[o]), dtype=np.int64)
        te = np.array(sorted(r for o in test for r in rows_by_origin[o]), dtype=np.int64)
        iterations.append((tr, te))
    return LooPlan(iterations)


# ----------------------------------------------------------------- metrics

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
        acc_t, acc_p = y_true == GENUINE, y_pred == GENUINE
        return cls(int(np.sum(acc_t & acc_p)), int(np.sum(~acc_t & ~acc_p)),
                   int(np.sum(~acc_t & acc_p)), int(np.sum(acc_t & ~acc_p)))


@dataclass(frozen=True)
class Metrics:
    acc: float
    rmse: float
    fpr: float | None
    fnr: float | None
    f1: float | None


def compute_metrics(c: ConfusionCounts) -> Metrics:
    """ACC, RMSE, FPR, FNR and F1; undefined ratios are ``None``."""
    n = c.total
    if n == 0:
        raise DataError("empty confusion matrix")
    wrong = c.fp + c.fn
    f1_den = 2 * c.tp + c.fp + c.fn
    return Metrics(
        acc=(c.tp + c.tn) / n,
        rmse=math.sqrt(wrong / n),
        fpr=c.fp / (c.fp + c.tn) if c.fp + c.tn else None,
        fnr=c.fn / (c.tp + c.fn) if c.tp + c.fn else None,
        f1=2 * c.tp / f1_den if f1_den else None,
    )


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(v.shape[0])
    start = 0
    bounds = np.flatnonzero(np.diff(sv)) + 1
    for stop in list(bounds) + [v.shape[0]]:
        ranks[order[start:stop]] = 0.5 * (start + stop + 1)
        start = stop
    return ranks


def auc_roc(scores_genuine, labels) -> float:
    """Probability that a genuine instance outscores an imposter (ties count 1/2)."""
    s = np.asarray(scores_genuine, dtype=np.float64)
    y = np.asarray(labels)
    g = y == GENUINE
    n_g, n_i = int(g.sum()), int((~g).sum())
    if n_g == 0 or n_i == 0:
        raise DataError("AUC needs both genuine and imposter instances")
    r = _average_ranks(s)
    return float((r[g].sum() - n_g * (n_g + 1) / 2.0) / (n_g * n_i))


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    fpr: float
    fnr: float


def threshold_sweep(scores_genuine, labels, taus=DEFAULT_TAUS) -> list[SweepPoint]:
    """FPR and FNR when accepting exactly those with ``score_genuine >= tau``."""
    s = np.asarray(scores_genuine, dtype=np.float64)
    y = np.asarray(labels)
    taus = [float(t) for t in taus]
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ConfigError("thresholds must be sorted ascending")
    g = y == GENUINE
    if not g.any() or g.all():
        raise DataError("threshold sweep needs both classes")
    out = []
    for t in taus:
        accepted = s >= t
        out.append(SweepPoint(t, float(np.mean(accepted[~g])), float(np.mean(~accepted[g]))))
    return out


def _fmt(v):
    return "n/a" if v is None else "%.2f" % v


@dataclass
class MetricsReport:
    per_iteration: list  # dicts METRIC -> float | None

    def values(self, metric: str) -> list[float]:
        return [it[metric] for it in self.per_iteration if it[metric] is not None]

    def mean(self, metric: str) -> float | None:
        v = self.values(metric)
        return float(np.mean(v)) if v else None

    def std(self, metric: str) -> float | None:
        v = self.values(metric)
        return float(np.std(v)) if v else None

    def formatted(self, metric: str) -> str:
        """``"mean (std)"`` to two decimals, e.g. ``"0.93 (0.06)"``."""
        m = self.mean(metric)
        return "n/a" if m is None else "%s (%s)" % (_fmt(m), _fmt(self.std(metric)))

    def summary(self) -> dict:
        return {m: {"mean": self.mean(m), "std": self.std(m), "formatted": self.formatted(m)} for m in METRICS}


# -------------------------------------------------------------- experiment

@dataclass
class ExperimentConfig:
    classifier: ClassifierSpec | None = None  # None: the family's reported best
    selector: str | None = "auto"             # "auto": the family's reported selector; None: no selection
    k: int = 10
    p: float = 0.9
    corr_threshold: float = 0.9
    selector_trees: int = 100
    grid_search: bool = False
    grids: object = None
    folds: int = 3
    taus: tuple = DEFAULT_TAUS
    seed: int = 0
    window: int = DEFAULT_WINDOW
    augment: bool = True
    max_originals: int | None = 24
    max_events: int | None = None
    n_genuine: int | None = None
    strict_ratio: bool = False
    event: EventConfig = field(default_factory=EventConfig)
    mfcc: MfccConfig = field(default_factory=MfccConfig)

    def resolved(self, family: str) -> tuple[ClassifierSpec, str | None]:
        spec, sel = FAMILY_DEFAULTS[family]
        spec = self.classifier or spec
        if spec.family == "random_forest" and self.classifier is None:
            spec = ClassifierSpec("random_forest", {**spec.params, "seed": self.seed})
        return spec, (sel if self.selector == "auto" else self.selector)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classifier"] = self.classifier.to_dict() if self.classifier else None
        return d

    def digest(self, family: str) -> str:
        blob = json.dumps({"family": family, **self.to_dict()}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    family: str
    spec: ClassifierSpec
    report: MetricsReport
    selections: list
    sweep: list
    predictions: list  # (iteration, origin_id, label, score_genuine)
    feature_count: int
    config_hash: str
    seed: int

    def table_row(self) -> dict:
        row = {"Model": self.family, "Classifier (parameters)": self.spec.describe(),
               "Feature count": self.feature_count}
        row.update({"AUC-ROC" if m == "AUC" else ("F1 score" if m == "F1" else m): self.report.formatted(m)
                    for m in METRICS})
        return row

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "classifier": self.spec.to_dict(),
            "classifier_label": self.spec.describe(),
            "feature_count": self.feature_count,
            "metrics": self.report.summary(),
            "per_iteration": self.report.per_iteration,
            "table_row": self.table_row(),
            "table_columns": list(self.table_row()),  # JSON objects are written with sorted keys
            "selections": [s.to_dict() for s in self.selections],
            "sweep": [asdict(p) for p in self.sweep],
            "config_hash": self.config_hash,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)


def evaluate_plan(data: LabeledDataset, plan: LooPlan, spec: ClassifierSpec, selector: str | None,
                  cfg: ExperimentConfig, family: str = "") -> ExperimentResult:
    """Run a leave-one-out plan: per iteration select features and fit on the
    training rows only, then score the held-out rows."""
    per_it, selections, preds, counts = [], [], [], []
    all_scores, all_labels = [], []
    for it, (tr, te) in enumerate(plan.iterations):
        Xtr, ytr = data.X[tr], data.labels[tr]
        cols = list(range(len(data.names)))
        if selector:
            rep = run_selector(selector, Xtr, ytr, data.names, k=cfg.k, p=cfg.p,
                               threshold=cfg.corr_threshold, n_estimators=cfg.selector_trees, seed=cfg.seed)
            selections.append(rep)
            cols = rep.indices
        names = tuple(data.names[c] for c in cols)
        it_spec = spec
        if cfg.grid_search:
            it_spec = grid_search(spec.family, cfg.grids, Xtr[:, cols], ytr, cfg.folds, cfg.seed, spec.params)
        model = train(it_spec, Xtr[:, cols], ytr, names)
        labels, scores = model.predict_many(data.X[te][:, cols])
        y_te = data.labels[te]
        m = compute_metrics(ConfusionCounts.from_labels(y_te, labels))
        per_it.append({"ACC": m.acc, "RMSE": m.rmse, "FPR": m.fpr, "FNR": m.fnr, "F1": m.f1,
                       "AUC": auc_roc(scores, y_te)})
        counts.append(len(cols))
        for r, s in zip(te, scores):
            preds.append((it, str(data.origin_ids[r]), int(data.labels[r]), float(s)))
        all_scores.append(scores)
        all_labels.append(y_te)
    sweep = threshold_sweep(np.concatenate(all_scores), np.concatenate(all_labels), cfg.taus)
    feature_count = Counter(counts).most_common(1)[0][0]
    return ExperimentResult(family, spec, MetricsReport(per_it), selections, sweep, preds,
                            feature_count, cfg.digest(family), cfg.seed)


def family_dataset(family: str, subjects, genuine=None, cfg: ExperimentConfig = ExperimentConfig()) -> LabeledDataset:
    if family not in FAMILY_BIOMETRICS:
        raise ConfigError("unknown model family %r (choose from %s)" % (family, ", ".join(FAMILY_BIOMETRICS)))
    bio = FAMILY_BIOMETRICS[family]
    _require(list(subjects), bio, family)
    if BREATH in bio:
        return build_event_dataset(subjects, genuine, bio, cfg.window, cfg.augment, cfg.event, cfg.mfcc, cfg.max_events)
    return build_window_dataset(subjects, genuine, bio, cfg.window, cfg.max_originals)


def run_experiment(family: str, data, cfg: ExperimentConfig = ExperimentConfig(), genuine=None) -> ExperimentResult:
    """Evaluate one model family (HR, HRG, HRB or HRGB) by balanced leave-one-out.

    ``data`` is either a list of ``SubjectData`` or a prepared
    ``LabeledDataset`` holding (at least) the family's feature groups.
    """
    if family not in FAMILY_BIOMETRICS:
        raise ConfigError("unknown model family %r (choose from %s)" % (family, ", ".join(FAMILY_BIOMETRICS)))
    if isinstance(data, LabeledDataset):
        ds = data.columns(FAMILY_BIOMETRICS[family])
    else:
        ds = family_dataset(family, data, genuine, cfg)
    spec, selector = cfg.resolved(family)
    n_feat = min(cfg.k, ds.X.shape[1]) if selector == "k_best" else ds.X.shape[1]
    plan = loo_plan(ds, cfg.n_genuine, n_features=n_feat, strict=cfg.strict_ratio)
    return evaluate_plan(ds, plan, spec, selector, cfg, family)


def format_table(results) -> str:
    """Plain-text table with one row per result, columns as in ``table_row``."""
    rows = [r.table_row() for r in results]
    if not rows:
        return ""
    cols = list(rows[0])
    width = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols}
    line = " | ".join(c.ljust(width[c]) for c in cols)
    out = [line, "-" * len(line)]
    out += [" | ".join(str(r[c]).ljust(width[c]) for c in cols) for r in rows]
    return "\n".join(out)
