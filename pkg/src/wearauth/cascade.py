"""Context-driven authentication cascade.

The heart-rate model runs first. If it is not confident enough, a moving
user is checked with heart rate plus gait, and finally breathing is added
(to heart rate and gait when the gait stage ran, to heart rate alone
otherwise). When every available stage escalates, the request falls back
to external verification.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .evaluation import FAMILY_BIOMETRICS, ExperimentConfig, family_dataset
from .features import MfccConfig, fuse_instance, gait_features, mfcc_features, stat_features
from .ingest import AudioClip, GaitStream, Window
from .learn import GENUINE, Prediction, TrainedModel, train
from .select import run_selector

STAGES = ("HR", "HRG", "HRB", "HRGB")
ACCEPT, ESCALATE, FALLBACK = "ACCEPT", "ESCALATE", "FALLBACK"
DEFAULT_TAU = 0.5
DEFAULT_MOTION_THRESHOLD = 0.1  # (m/s^2)^2, variance of acceleration magnitude
MIN_MOTION_SAMPLES = 10


@dataclass(frozen=True)
class AuthContext:
    """Sensor snippets available for one authentication request."""

    hr_window: Window | None = None
    gait_window: GaitStream | None = None
    breath_event: AudioClip | None = None
    subject_id: str = ""

    @property
    def hr_available(self) -> bool:
        return self.hr_window is not None and len(self.hr_window) >= 2

    @property
    def gait_available(self) -> bool:
        return self.gait_window is not None and len(self.gait_window) >= MIN_MOTION_SAMPLES

    @property
    def breath_available(self) -> bool:
        return self.breath_event is not None and len(self.breath_event) > 0

    @property
    def availability(self) -> dict:
        return {"HR": self.hr_available, "GAIT": self.gait_available, "BREATH": self.breath_available}


@dataclass(frozen=True)
class CascadeConfig:
    models: dict
    thresholds: dict = field(default_factory=lambda: {s: DEFAULT_TAU for s in STAGES})
    motion_threshold: float = DEFAULT_MOTION_THRESHOLD
    mfcc: MfccConfig = field(default_factory=MfccConfig)

    def __post_init__(self):
        unknown = set(self.models) - set(STAGES)
        if unknown:
            raise ConfigError("unknown cascade stages: %s" % sorted(unknown))
        if "HR" not in self.models:
            raise ConfigError("the cascade needs an HR model")
        for stage, m in self.models.items():
            if not (hasattr(m, "predict") and hasattr(m, "feature_names")):
                raise ConfigError("stage %s model is not fitted" % stage)
        th = {s: DEFAULT_TAU for s in STAGES}
        th.update({s: float(t) for s, t in self.thresholds.items()})
        for s, t in th.items():
            if s not in STAGES:
                raise ConfigError("threshold for unknown stage %r" % s)
            if not 0.0 <= t <= 1.0:
                raise ConfigError("threshold for %s must be in [0, 1], got %g" % (s, t))
        if not self.motion_threshold >= 0:
            raise ConfigError("motion threshold must be non-negative")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "models", dict(self.models))

    @classmethod
    def uniform(cls, models: dict, tau: float = DEFAULT_TAU, **kw) -> "CascadeConfig":
        return cls(models, {s: tau for s in STAGES}, **kw)

    def to_dict(self) -> dict:
        return {
            "format": "wearauth-cascade",
            "version": 1,
            "thresholds": dict(self.thresholds),
            "motion_threshold": self.motion_threshold,
            "models": {s: m.to_dict() for s, m in self.models.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeConfig":
        if d.get("format") != "wearauth-cascade":
            raise ConfigError("not a cascade file")
        if d.get("version") != 1:
            raise ConfigError("unsupported cascade version %r" % d.get("version"))
        models = {s: TrainedModel.from_dict(m) for s, m in d["models"].items()}
        return cls(models, d.get("thresholds", {}), d.get("motion_threshold", DEFAULT_MOTION_THRESHOLD))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CascadeConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("cascade file not found: %s" % path) from None
        except json.JSONDecodeError as e:
            raise ConfigError("cascade file %s is not valid JSON: %s" % (path, e)) from None
        return cls.from_dict(d)


@dataclass(frozen=True)
class StageDecision:
    stage: str
    prediction: Prediction | None
    outcome: str
    tau: float | None = None

    def __post_init__(self):
        if self.outcome == ACCEPT and not (
                self.prediction is not None and self.prediction.label == GENUINE
                and self.prediction.score_genuine >= self.tau):
            raise ValueError("ACCEPT requires a confident genuine prediction")

    def to_dict(self) -> dict:
        p = self.prediction
        return {"stage": self.stage, "outcome": self.outcome, "tau": self.tau,
                "label": None if p is None else p.label,
                "score_genuine": None if p is None else p.score_genuine}


def detect_motion(g: GaitStream, threshold: float = DEFAULT_MOTION_THRESHOLD) -> bool:
    """Whether the variance of the acceleration magnitude exceeds ``threshold``."""
    if len(g) < MIN_MOTION_SAMPLES:
        raise DataError("motion detection needs at least %d samples, got %d" % (MIN_MOTION_SAMPLES, len(g)))
    mag = np.sqrt(np.sum(g.accel ** 2, axis=1))
    return bool(np.var(mag) > threshold)


def stage_features(ctx: AuthContext, stage: str, mfcc_cfg: MfccConfig = MfccConfig()):
    bio = FAMILY_BIOMETRICS[stage]
    parts = [stat_features(ctx.hr_window, ctx.subject_id)]
    if "GAIT" in bio:
        parts.append(gait_features(GaitStream(ctx.gait_window.data, ctx.gait_window.sample_period, ctx.subject_id)))
    if "BREATH" in bio:
        ev = ctx.breath_event
        parts.append(mfcc_features(AudioClip(ev.samples, ev.sample_rate, ctx.subject_id), mfcc_cfg, pad=True))
    return fuse_instance(parts, "")


def _run_stage(ctx, cfg, stage, last):
    model = cfg.models.get(stage)
    if model is None:
        raise ConfigError("cascade has no %s model" % stage)
    fv = stage_features(ctx, stage, cfg.mfcc)
    missing = [n for n in model.feature_names if n not in fv.names]
    if missing:
        raise ConfigError("%s model expects features the context cannot provide: %s" % (stage, ", ".join(missing[:5])))
    pred = model.predict(fv)
    tau = cfg.thresholds[stage]
    if pred.label == GENUINE and pred.score_genuine >= tau:
        return StageDecision(stage, pred, ACCEPT, tau)
    return StageDecision(stage, pred, FALLBACK if last else ESCALATE, tau)


def authenticate_cascade(ctx: AuthContext, cfg: CascadeConfig) -> list[StageDecision]:
    """Audit trail of stage decisions; the last entry is final."""
    if not ctx.hr_available:
        return [StageDecision("HR", None, FALLBACK, cfg.thresholds["HR"])]
    moving = ctx.gait_available and detect_motion(ctx.gait_window, cfg.motion_threshold)
    plan = ["HR"]
    if moving:
        plan.append("HRG")
    if ctx.breath_available:
        plan.append("HRGB" if moving else "HRB")
    trail = []
    for k, stage in enumerate(plan):
        d = _run_stage(ctx, cfg, stage, k == len(plan) - 1)
        trail.append(d)
        if d.outcome != ESCALATE:
            break
    return trail


def train_cascade(subjects, genuine=None, cfg: ExperimentConfig = ExperimentConfig(), stages=STAGES,
                  tau: float = DEFAULT_TAU, motion_threshold: float = DEFAULT_MOTION_THRESHOLD) -> CascadeConfig:
    """Fit one model per stage on all instances, with each family's selector."""
    models = {}
    for stage in stages:
        ds = family_dataset(stage, subjects, genuine, cfg)
        spec, selector = cfg.resolved(stage)
        cols = list(range(len(ds.names)))
        if selector:
            cols = run_selector(selector, ds.X, ds.labels, ds.names, k=cfg.k, p=cfg.p,
                                threshold=cfg.corr_threshold, n_estimators=cfg.selector_trees,
                                seed=cfg.seed).indices
        models[stage] = train(spec, ds.X[:, cols], ds.labels, [ds.names[c] for c in cols])
    return CascadeConfig.uniform(models, tau, motion_threshold=motion_threshold, mfcc=cfg.mfcc)
