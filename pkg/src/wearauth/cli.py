"""``wearauth`` command-line workbench.

Every artifact records the run's config hash and seed (JSON fields, or a
leading ``#`` comment line in CSV files). Reruns with the same inputs and
options produce byte-identical files.

Exit codes: 0 success, 1 usage, 2 data error, 3 config error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, augment, evaluation
from .cascade import DEFAULT_MOTION_THRESHOLD, DEFAULT_TAU, AuthContext, CascadeConfig, authenticate_cascade, train_cascade
from .errors import ConfigError, DataError, WearAuthError
from .evaluation import FAMILY_BIOMETRICS, ExperimentConfig, SubjectData
from .features import (MfccConfig, gait_features, meta_line, mfcc_features, read_feature_csv, stat_features,
                       write_feature_csv)
from .ingest import (DEFAULT_PROFILES, DEFAULT_WINDOW, Window, extract_breath_events, load_gait_csv,
                     load_heart_rate_csv, load_profiles, load_wav, segment_windows, synth_subject, write_gait_csv,
                     write_heart_rate_csv, write_wav)
from .learn import FAMILIES, ClassifierSpec
from .select import METHODS, run_selector

log = logging.getLogger("wearauth")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONFIG = 0, 1, 2, 3
_NOT_HASHED = {"out", "config", "command", "func", "verbose"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


class UsageError(WearAuthError):
    pass


# ----------------------------------------------------------------- helpers

def _config_hash(args) -> str:
    d = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_HASHED}
    blob = json.dumps({"command": args.command, **d}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _meta(args) -> dict:
    return {"config_hash": _config_hash(args), "seed": getattr(args, "seed", None), "wearauth": __version__}


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows, meta) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(meta_line(meta))
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    return "" if v is None else repr(float(v))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_config_file(args) -> None:
    """Values from ``--config`` (a JSON object) override command-line flags."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("config file not found: %s" % path) from None
    except json.JSONDecodeError as e:
        raise ConfigError("config file %s is not valid JSON: %s" % (path, e)) from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    known = set(vars(args)) - {"func", "command", "config"}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise ConfigError("unknown config key %r for %s" % (key, args.command))
        setattr(args, dest, value)


def _audio_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".wav")
        if not files:
            raise DataError("no .wav files in %s" % path)
        return files
    if not path.is_file():
        raise DataError("audio path not found: %s" % path)
    return [path]


def _load_clips(path, subject_id):
    return [load_wav(f, subject_id, "%s/%s" % (subject_id, f.stem)) for f in _audio_files(Path(path))]


def _subject_dir(d: Path, window) -> SubjectData:
    sid = d.name
    hr = load_heart_rate_csv(d / "hr.csv", sid, window) if (d / "hr.csv").is_file() else None
    gait = load_gait_csv(d / "gait.csv", sid) if (d / "gait.csv").is_file() else None
    wavs = sorted(p for p in d.iterdir() if p.suffix.lower() == ".wav")
    clips = [load_wav(f, sid, "%s/%s" % (sid, f.stem)) for f in wavs]
    return SubjectData(sid, hr, gait, clips)


def _pairs(items, flag):
    out = {}
    for item in items or []:
        sid, sep, path = item.partition("=")
        if not sep or not sid or not path:
            raise UsageError("%s expects SUBJECT=PATH, got %r" % (flag, item))
        out[sid] = path
    return out


def _load_subjects(args) -> list[SubjectData]:
    """Subjects from ``--data`` directories, ``--hr/--gait/--audio`` pairs, or ``--synth``."""
    if args.synth:
        profiles = load_profiles(args.profiles) if args.profiles else list(DEFAULT_PROFILES)
        return [SubjectData(p.subject_id, *synth_subject(args.seed, p)) for p in profiles]
    subjects = {}
    if args.data:
        root = Path(args.data)
        if not root.is_dir():
            raise DataError("data directory not found: %s" % root)
        for d in sorted(p for p in root.iterdir() if p.is_dir()):
            subjects[d.name] = _subject_dir(d, args.window)
    hr, gait, audio = _pairs(args.hr, "--hr"), _pairs(args.gait, "--gait"), _pairs(args.audio, "--audio")
    for sid in sorted(set(hr) | set(gait) | set(audio)):
        s = subjects.setdefault(sid, SubjectData(sid))
        if sid in hr:
            s.hr = load_heart_rate_csv(hr[sid], sid, args.window)
        if sid in gait:
            s.gait = load_gait_csv(gait[sid], sid)
        if sid in audio:
            s.clips = _load_clips(audio[sid], sid)
    if not subjects:
        raise UsageError("no input data: give --data, --hr/--gait/--audio, or --synth")
    return list(subjects.values())


def _classifier(args) -> ClassifierSpec | None:
    if not args.classifier:
        return None
    keys = {"knn": ("k", "p_norm"), "gaussian_nb": ("var_smoothing",),
            "random_forest": ("n_estimators", "max_depth"), "svm": ("kernel", "C", "gamma", "degree")}
    if args.classifier not in keys:
        raise ConfigError("unknown classifier %r (choose from %s)" % (args.classifier, ", ".join(FAMILIES)))
    params = {}
    for k in keys[args.classifier]:
        v = getattr(args, k)
        if v is not None:
            params["p" if k == "p_norm" else k] = v
    if args.classifier == "random_forest":
        params.setdefault("seed", args.seed)
    return ClassifierSpec(args.classifier, params)


def _experiment_config(args) -> ExperimentConfig:
    grids = None
    if args.grids:
        grids = args.grids if isinstance(args.grids, (dict, list)) else json.loads(Path(args.grids).read_text())
    selector = None if args.selector == "none" else args.selector
    return ExperimentConfig(
        classifier=_classifier(args), selector=selector, k=args.select_k, p=args.select_p,
        corr_threshold=args.corr_threshold, grid_search=args.grid_search, grids=grids, folds=args.folds,
        seed=args.seed, window=args.window, augment=not args.no_augment, max_originals=args.max_originals,
        max_events=args.max_events, n_genuine=args.n_genuine, strict_ratio=args.strict_ratio,
        taus=tuple(args.taus) if args.taus else evaluation.DEFAULT_TAUS)


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    out = _outdir(args)
    profiles = load_profiles(args.profiles) if args.profiles else list(DEFAULT_PROFILES)
    manifest = {**_meta(args), "subjects": []}
    for p in profiles:
        hr, gait, clips = synth_subject(args.seed, p)
        d = out / p.subject_id
        d.mkdir(exist_ok=True)
        write_heart_rate_csv(d / "hr.csv", hr)
        write_gait_csv(d / "gait.csv", gait)
        for i, c in enumerate(clips):
            write_wav(d / ("breath_%02d.wav" % i), c)
        manifest["subjects"].append({"subject_id": p.subject_id, "hr_samples": len(hr),
                                     "gait_samples": len(gait), "clips": len(clips)})
    _dump_json(out / "manifest.json", manifest)
    print("wrote %d subjects to %s" % (len(profiles), out))
    return EXIT_OK


def _default_subject(path: Path) -> str:
    """Subject id implied by the per-subject directory layout."""
    return path.name if path.is_dir() else (path.resolve().parent.name or path.stem)


def cmd_extract(args) -> int:
    if not (args.hr or args.gait or args.audio):
        raise UsageError("nothing to extract: give --hr, --gait and/or --audio")
    out = _outdir(args)
    meta = _meta(args)
    sid = args.subject or _default_subject(Path(args.hr or args.gait or args.audio))
    if args.hr:
        series = load_heart_rate_csv(args.hr, sid, args.window)
        vecs = [stat_features(w, series.subject_id, "%s/w%d" % (series.subject_id, i))
                for i, w in enumerate(segment_windows(series, args.window, args.overlap))]
        write_feature_csv(out / "hr_features.csv", vecs, meta=meta)
        print("hr: %d rows" % len(vecs))
    if args.gait:
        stream = load_gait_csv(args.gait, sid)
        vecs = [gait_features(g, "%s/w%d" % (stream.subject_id, i))
                for i, g in enumerate(stream.windows(args.window, args.overlap))]
        write_feature_csv(out / "gait_features.csv", vecs, meta=meta)
        print("gait: %d rows" % len(vecs))
    if args.audio:
        vecs, labels = [], []
        for clip in _load_clips(args.audio, sid):
            for ev in extract_breath_events(clip):
                variants = augment.augment_breath_event(ev) if args.augment else [(augment.AugmentSpec("pitch", 0.0), ev)]
                for spec, v in variants:
                    vecs.append(mfcc_features(v, MfccConfig(), pad=True))
                    labels.append(spec.label)
        if not vecs:
            raise DataError("no breathing events found in %s" % args.audio)
        write_feature_csv(out / "breath_features.csv", vecs, {"augmentation": labels}, meta=meta)
        print("breath: %d rows" % len(vecs))
    return EXIT_OK


def cmd_augment(args) -> int:
    out = _outdir(args)
    rows = []
    for clip in _load_clips(args.audio, args.subject or _default_subject(Path(args.audio))):
        for ev in extract_breath_events(clip):
            for spec, v in augment.augment_breath_event(ev):
                name = "%s_%s.wav" % (ev.origin_id.replace("/", "_"), spec.label)
                write_wav(out / name, v)
                rows.append([ev.origin_id, spec.label, int(not spec.is_identity), name, len(v)])
    _write_csv(out / "augmentations.csv", ["origin_id", "augmentation", "is_augmented", "file", "samples"],
               rows, _meta(args))
    print("wrote %d variants" % len(rows))
    return EXIT_OK


def cmd_select(args) -> int:
    vectors = []
    for f in args.features:
        vectors += read_feature_csv(f)[0] if not args.extra else read_feature_csv(f, tuple(args.extra))[0]
    if not vectors:
        raise DataError("no feature rows")
    names = vectors[0].names
    if any(v.names != names for v in vectors):
        raise DataError("feature files have differing columns")
    genuine = args.genuine or vectors[0].subject_id
    y = np.array([0 if v.subject_id == genuine else 1 for v in vectors])
    X = np.stack([v.values for v in vectors])
    rep = run_selector(args.method, X, y, names, k=args.select_k, p=args.select_p,
                       threshold=args.corr_threshold, n_estimators=args.n_estimators, seed=args.seed)
    out = _outdir(args)
    _dump_json(out / "selection.json", {**_meta(args), **rep.to_dict()})
    print("%s kept %d of %d features" % (args.method, len(rep.kept), len(names)))
    return EXIT_OK


def _sweep_rows(points):
    return [[_num(p.tau), _num(p.fpr), _num(p.fnr)] for p in points]


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    subjects = _load_subjects(args)
    families = list(FAMILY_BIOMETRICS) if args.family == "all" else [args.family]
    out = _outdir(args)
    meta = _meta(args)
    results = []
    for fam in families:
        res = evaluation.run_experiment(fam, subjects, cfg, args.genuine)
        results.append(res)
        stem = fam if len(families) > 1 else ""
        prefix = (stem + "_") if stem else ""
        _dump_json(out / (prefix + "metrics.json"), {**res.to_dict(), **meta})
        _write_csv(out / (prefix + "iterations.csv"), ["iteration", *evaluation.METRICS],
                   [[i, *(_num(it[m]) for m in evaluation.METRICS)] for i, it in enumerate(res.report.per_iteration)],
                   meta)
        _write_csv(out / (prefix + "predictions.csv"), ["iteration", "origin_id", "label", "score_genuine"],
                   [[i, o, lab, _num(s)] for i, o, lab, s in res.predictions], meta)
        _write_csv(out / (prefix + "sweep.csv"), ["tau", "fpr", "fnr"], _sweep_rows(res.sweep), meta)
    print(evaluation.format_table(results))
    return EXIT_OK


def cmd_sweep(args) -> int:
    path = Path(args.predictions)
    if not path.is_file():
        raise DataError("predictions file not found: %s" % path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    try:
        scores = [float(r["score_genuine"]) for r in rows]
        labels = [int(r["label"]) for r in rows]
    except (KeyError, ValueError, TypeError) as e:
        raise DataError("%s: expected columns label,score_genuine (%s)" % (path, e)) from None
    taus = args.taus or evaluation.DEFAULT_TAUS
    points = evaluation.threshold_sweep(scores, labels, taus)
    out = _outdir(args)
    _write_csv(out / "sweep.csv", ["tau", "fpr", "fnr"], _sweep_rows(points), _meta(args))
    for p in points:
        print("tau=%.2f fpr=%.3f fnr=%.3f" % (p.tau, p.fpr, p.fnr))
    return EXIT_OK


def cmd_train_cascade(args) -> int:
    cfg = _experiment_config(args)
    subjects = _load_subjects(args)
    stages = [s for s in evaluation.FAMILY_BIOMETRICS
              if all(_has(sub, b) for sub in subjects for b in FAMILY_BIOMETRICS[s])]
    if "HR" not in stages:
        raise ConfigError("cascade training requires heart-rate data for every subject")
    cascade = train_cascade(subjects, args.genuine, cfg, stages, args.tau, args.motion_threshold)
    out = _outdir(args)
    _dump_json(out / "cascade.json", {**cascade.to_dict(), **_meta(args)})
    print("trained stages: %s" % ", ".join(stages))
    return EXIT_OK


def _has(sub, biometric):
    return {"HR": sub.hr is not None, "GAIT": sub.gait is not None, "BREATH": bool(sub.clips)}[biometric]


def _trace_context(row, base: Path, index: int) -> AuthContext:
    def resolve(key):
        v = (row.get(key) or "").strip()
        if not v:
            return None
        p = Path(v) if Path(v).is_absolute() else base / v
        if not p.is_file():
            raise DataError("request %d: %s file not found: %s" % (index, key, v))
        return p

    sid = (row.get("subject_id") or "").strip()
    try:
        hr_p, gait_p, audio_p = resolve("hr"), resolve("gait"), resolve("audio")
        hr = Window(load_heart_rate_csv(hr_p, sid, 2).values) if hr_p else None
        gait = load_gait_csv(gait_p, sid) if gait_p else None
        audio = load_wav(audio_p, sid) if audio_p else None
    except DataError as e:
        msg = str(e)
        raise DataError(msg if msg.startswith("request ") else "request %d: %s" % (index, msg)) from None
    return AuthContext(hr, gait, audio, sid)


def cmd_authenticate(args) -> int:
    cascade = CascadeConfig.load(args.cascade)
    if args.tau is not None:
        cascade = CascadeConfig.uniform(cascade.models, args.tau, motion_threshold=cascade.motion_threshold)
    trace = Path(args.trace)
    if not trace.is_file():
        raise DataError("trace file not found: %s" % trace)
    with trace.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        rows = list(reader)
        for col in ("hr", "gait", "audio"):
            if reader.fieldnames is not None and col not in reader.fieldnames:
                raise DataError("%s: missing column %r" % (trace, col))
    trails, counts = [], {"ACCEPT": 0, "FALLBACK": 0}
    for i, row in enumerate(rows):
        ctx = _trace_context(row, trace.parent, i)
        trail = authenticate_cascade(ctx, cascade)
        counts[trail[-1].outcome] += 1
        trails.append({"request": i, "request_id": row.get("request_id", str(i)), "subject_id": ctx.subject_id,
                       "availability": ctx.availability, "final": trail[-1].outcome,
                       "trail": [d.to_dict() for d in trail]})
    out = _outdir(args)
    _dump_json(out / "decisions.json", {**_meta(args), "summary": counts, "requests": trails})
    print("ACCEPT=%d FALLBACK=%d" % (counts["ACCEPT"], counts["FALLBACK"]))
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _data_args(p):
    p.add_argument("--data", help="directory with one sub-directory per subject (hr.csv, gait.csv, *.wav)")
    p.add_argument("--hr", action="append", metavar="SUBJECT=PATH", help="heart-rate CSV for a subject")
    p.add_argument("--gait", action="append", metavar="SUBJECT=PATH", help="gait CSV for a subject")
    p.add_argument("--audio", action="append", metavar="SUBJECT=PATH", help="WAV file or directory for a subject")
    p.add_argument("--synth", action="store_true", help="generate synthetic subjects in memory")
    p.add_argument("--profiles", help="subject profile file for --synth")
    p.add_argument("--genuine", help="genuine subject id (default: the first subject)")


def _model_args(p):
    p.add_argument("--classifier", choices=FAMILIES, help="classifier family (default: per model family)")
    p.add_argument("--k", type=int, help="knn neighbours")
    p.add_argument("--p-norm", type=float, help="knn Minkowski order")
    p.add_argument("--var-smoothing", type=float)
    p.add_argument("--n-estimators", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--kernel", choices=("poly", "rbf"))
    p.add_argument("--C", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--selector", default="auto", choices=("auto", "none", *METHODS))
    p.add_argument("--select-k", type=int, default=10)
    p.add_argument("--select-p", type=float, default=0.9)
    p.add_argument("--corr-threshold", type=float, default=0.9)
    p.add_argument("--grid-search", action="store_true")
    p.add_argument("--grids", help="JSON file with a parameter grid (or list of grids)")
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--max-originals", type=int, default=ExperimentConfig.max_originals,
                   help="cap on windows per subject for families without breathing")
    p.add_argument("--max-events", type=int, help="cap on breathing events per subject")
    p.add_argument("--n-genuine", type=int, help="number of genuine originals to hold out in turn")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--strict-ratio", action="store_true", help="fail instead of warn on the 10x data rule")
    p.add_argument("--taus", type=float, nargs="+")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wearauth", description="Soft-biometric authentication workbench.")
    parser.add_argument("--version", action="version", version="wearauth " + __version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file whose keys override these flags")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
        p.add_argument("--out", default=".", help="output directory")
        return p

    p = add("synth", cmd_synth, "Generate synthetic subjects (HR, gait, breathing audio).")
    p.add_argument("--profiles")

    p = add("extract", cmd_extract, "Extract per-biometric feature CSVs for one subject.")
    p.add_argument("--hr")
    p.add_argument("--gait")
    p.add_argument("--audio", help="WAV file or directory")
    p.add_argument("--subject", help="subject id (default: the directory holding the input)")
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--augment", action="store_true", help="emit all 22 variants per breathing event")

    p = add("augment", cmd_augment, "Write the 22 augmented variants of every breathing event.")
    p.add_argument("--audio", required=True)
    p.add_argument("--subject")

    p = add("select", cmd_select, "Run a feature selector on feature CSVs.")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--extra", nargs="*", help="extra metadata columns in the CSVs")
    p.add_argument("--genuine")
    p.add_argument("--method", choices=METHODS, default="k_best")
    p.add_argument("--select-k", type=int, default=10)
    p.add_argument("--select-p", type=float, default=0.9)
    p.add_argument("--corr-threshold", type=float, default=0.9)
    p.add_argument("--n-estimators", type=int, default=100)

    p = add("experiment", cmd_experiment, "Balanced leave-one-out evaluation of a model family.")
    p.add_argument("--family", required=True, choices=(*FAMILY_BIOMETRICS, "all"))
    _data_args(p)
    _model_args(p)

    p = add("sweep", cmd_sweep, "FPR/FNR across confidence thresholds from a predictions CSV.")
    p.add_argument("--predictions", required=True)
    p.add_argument("--taus", type=float, nargs="+")

    p = add("train-cascade", cmd_train_cascade, "Fit per-stage cascade models.")
    _data_args(p)
    _model_args(p)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--motion-threshold", type=float, default=DEFAULT_MOTION_THRESHOLD)

    p = add("authenticate", cmd_authenticate, "Run the cascade on a session trace.")
    p.add_argument("--cascade", required=True, help="cascade.json from train-cascade")
    p.add_argument("--trace", required=True, help="CSV with columns request_id,subject_id,hr,gait,audio")
    p.add_argument("--tau", type=float, help="override every stage threshold")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="wearauth: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        _apply_config_file(args)
        return args.func(args)
    except UsageError as e:
        print("wearauth: error: %s" % e, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print("wearauth: config error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print("wearauth: data error: %s" % e, file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
