"""Feature extraction for the three biometrics and instance fusion.

* heart rate: 21 window statistics (``STAT_NAMES``)
* gait: mean, variance and kurtosis of each of the six inertial axes
* breathing: 40 frame-averaged MFCCs
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import dsp
from .errors import ConfigError, DataError
from .ingest import GAIT_AXES, AudioClip, GaitStream, Window

HR, GAIT, BREATH = "HR", "GAIT", "BREATH"

STAT_NAMES = (
    "μ", "Mdn", "σ", "σ²", "cov", "ran", "coran", "p25", "p75", "max", "iqr",
    "coi", "mad_Mdn", "mad_μ", "E", "P", "rms", "rss", "snr", "γ", "κ",
)
GAIT_NAMES = tuple("%s %s" % (axis, stat) for axis in GAIT_AXES for stat in ("μ", "σ²", "κ"))
MFCC_NAMES = tuple("MFCC%d" % i for i in range(1, 41))


@dataclass(frozen=True)
class FeatureVector:
    names: tuple
    values: np.ndarray
    biometrics: frozenset = field(default_factory=frozenset)
    subject_id: str = ""
    origin_id: str = ""

    def __post_init__(self):
        names = tuple(self.names)
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(names),):
            raise DataError("feature vector has %d names but values of shape %s" % (len(names), values.shape))
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names")
        if not np.all(np.isfinite(values)):
            bad = [n for n, v in zip(names, values) if not np.isfinite(v)]
            raise DataError("non-finite features: %s" % ", ".join(bad))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "biometrics", frozenset(self.biometrics))

    def __len__(self):
        return len(self.names)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))

    def take(self, names) -> np.ndarray:
        """Values for ``names`` in that order; raises on any missing name."""
        index = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise DataError("feature vector lacks %s" % ", ".join(missing))
        return self.values[[index[n] for n in names]]


def _values(w) -> np.ndarray:
    x = np.asarray(w.values if isinstance(w, Window) else w, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise DataError("window must hold at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise DataError("window contains NaN or infinite values")
    return x


def _moment_ratios(x: np.ndarray, mu: float, constant: bool) -> tuple[float, float]:
    if constant:
        return 0.0, 0.0
    d = x - mu
    m2 = np.mean(d ** 2)
    return float(np.mean(d ** 3) / m2 ** 1.5), float(np.mean(d ** 4) / m2 ** 2)


def stat_values(x) -> np.ndarray:
    """The 21 window statistics as a bare array ordered like ``STAT_NAMES``.

    A window with ``max == min`` is treated as exactly constant: its spread
    and every ratio with a zero denominator (cov, snr, skewness, kurtosis,
    coran, coi) are reported as 0 rather than NaN.
    """
    x = _values(x)
    n = x.shape[0]
    mu = float(np.mean(x))
    mdn = float(np.median(x))
    lo, hi = float(np.min(x)), float(np.max(x))
    constant = lo == hi
    sigma = 0.0 if constant else float(np.std(x, ddof=1))
    var = sigma * sigma
    cov = sigma / mu if sigma > 0 and mu != 0 else 0.0
    ran = hi - lo
    coran = ran / (hi + lo) if hi + lo != 0 else 0.0
    p25, p75 = (float(v) for v in np.percentile(x, [25, 75]))
    iqr = p75 - p25
    coi = iqr / (p75 + p25) if p75 + p25 != 0 else 0.0
    mad_mdn = float(np.median(np.abs(x - mdn)))
    mad_mu = float(np.mean(np.abs(x - mu)))
    energy = float(np.sum(x * x))
    power = energy / n
    snr = mu / sigma if sigma > 0 else 0.0
    skew, kurt = _moment_ratios(x, mu, constant)
    return np.array([mu, mdn, sigma, var, cov, ran, coran, p25, p75, hi, iqr, coi,
                     mad_mdn, mad_mu, energy, power, np.sqrt(power), np.sqrt(energy), snr, skew, kurt])


def stat_features(w, subject_id: str = "", origin_id: str = "") -> FeatureVector:
    return FeatureVector(STAT_NAMES, stat_values(w), {HR}, subject_id, origin_id)


def gait_values(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    out = np.empty(18)
    for a in range(6):
        x = data[:, a]
        mu = float(np.mean(x))
        constant = x.min() == x.max()
        out[3 * a] = mu
        out[3 * a + 1] = 0.0 if constant else float(np.var(x, ddof=1))
        out[3 * a + 2] = _moment_ratios(x, mu, constant)[1]
    return out


def gait_features(g: GaitStream, origin_id: str = "") -> FeatureVector:
    """Per-axis mean, sample variance and kurtosis of one gait window."""
    if g.data.shape[0] < 2:
        raise DataError("gait window must hold at least 2 samples")
    return FeatureVector(GAIT_NAMES, gait_values(g.data), {GAIT}, g.subject_id, origin_id)


@dataclass(frozen=True)
class MfccConfig:
    frame_len: int = 2048
    hop: int = 512
    window: str = "hann"
    preemphasis: float = 0.97
    n_filters: int = 64
    fmin: float = 0.0
    fmax: float | None = None
    n_coeffs: int = 40
    log_floor: float = 1e-10

    def __post_init__(self):
        dsp.FrameConfig(self.frame_len, self.hop, self.window)
        if not 1 <= self.n_coeffs <= self.n_filters:
            raise ConfigError("n_coeffs must be in [1, n_filters]")


@lru_cache(maxsize=8)
def _filterbank(n_filters, frame_len, sample_rate, fmin, fmax):
    return dsp.build_mel_filterbank(n_filters, frame_len, sample_rate, fmin, fmax)


def mfcc_frames(samples: np.ndarray, sample_rate: int, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Per-frame MFCC matrix of shape ``(n_frames, n_coeffs)``.

    Trailing exact zeros are not analysed (beyond what is needed to fill one
    frame), so zero padding never changes the result.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.shape[0] < cfg.frame_len:
        raise DataError("event has %d samples, shorter than one frame (%d)" % (x.shape[0], cfg.frame_len))
    nz = np.flatnonzero(x)
    extent = max(int(nz[-1]) + 1 if nz.size else 0, cfg.frame_len)
    x = x[:extent]
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - cfg.preemphasis * x[:-1]
    n_frames = 1 + (extent - cfg.frame_len) // cfg.hop
    fcfg = dsp.FrameConfig(cfg.frame_len, cfg.hop, cfg.window)
    power = np.empty((n_frames, cfg.frame_len // 2 + 1))
    for i in range(n_frames):
        power[i] = dsp.fft_magnitude(y[i * cfg.hop:i * cfg.hop + cfg.frame_len], fcfg) ** 2
    fmax = cfg.fmax if cfg.fmax is not None else sample_rate / 2.0
    fb = _filterbank(cfg.n_filters, cfg.frame_len, float(sample_rate), float(cfg.fmin), float(fmax))
    logmel = np.log(np.maximum(fb.apply(power), cfg.log_floor))
    return dsp.dct_ii(logmel, cfg.n_coeffs, ortho=True)


def mfcc_features(event: AudioClip, cfg: MfccConfig = MfccConfig(), pad: bool = False) -> FeatureVector:
    """Frame-averaged MFCCs of one breathing event.

    With ``pad=True`` events shorter than one frame are zero-padded instead
    of rejected.
    """
    x = event.samples
    if pad and x.shape[0] < cfg.frame_len:
        x = np.concatenate([x, np.zeros(cfg.frame_len - x.shape[0])])
    coeffs = mfcc_frames(x, event.sample_rate, cfg).mean(axis=0)
    names = tuple("MFCC%d" % i for i in range(1, cfg.n_coeffs + 1))
    return FeatureVector(names, coeffs, {BREATH}, event.subject_id, event.origin_id)


def fuse_instance(parts, origin_id: str | None = None) -> FeatureVector:
    """Concatenate feature vectors of one subject into a single instance."""
    parts = list(parts)
    if not parts:
        raise DataError("nothing to fuse")
    subjects = {p.subject_id for p in parts}
    if len(subjects) > 1:
        raise DataError("cannot fuse features of different subjects: %s" % sorted(subjects))
    names = [n for p in parts for n in p.names]
    if len(set(names)) != len(names):
        raise DataError("fused parts have overlapping feature names")
    if origin_id is None:
        origins = []
        for p in parts:
            if p.origin_id and p.origin_id not in origins:
                origins.append(p.origin_id)
        origin_id = "|".join(origins)
    return FeatureVector(names, np.concatenate([p.values for p in parts]),
                         frozenset().union(*(p.biometrics for p in parts)),
                         parts[0].subject_id, origin_id)


def meta_line(meta: dict) -> str:
    return "# " + " ".join("%s=%s" % (k, meta[k]) for k in sorted(meta)) + "\n"


def write_feature_csv(path, vectors, extra: dict | None = None, meta: dict | None = None) -> None:
    """Write vectors sharing one name list as CSV.

    Columns are ``subject_id, origin_id``, then any ``extra`` columns (name to
    per-row values), then the features. ``meta`` is written as one leading
    ``# key=value`` comment line.
    """
    vectors = list(vectors)
    extra = extra or {}
    names = vectors[0].names if vectors else ()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write(meta_line(meta))
        out = csv.writer(fh)
        out.writerow(["subject_id", "origin_id", *extra, *names])
        for i, v in enumerate(vectors):
            if v.names != names:
                raise DataError("row %d has a different feature layout" % i)
            out.writerow([v.subject_id, v.origin_id, *(col[i] for col in extra.values()),
                          *(repr(float(x)) for x in v.values)])


def read_feature_csv(path, extra: tuple = ()) -> tuple[list[FeatureVector], dict]:
    """Inverse of ``write_feature_csv``; returns vectors and extra columns."""
    path = Path(path)
    if not path.is_file():
        raise DataError("feature file not found: %s" % path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines(keepends=True)
    skipped = 0
    while skipped < len(lines) and lines[skipped].startswith("#"):
        skipped += 1
    rows = list(csv.reader(lines[skipped:]))
    if not rows or rows[0][:2] != ["subject_id", "origin_id"]:
        raise DataError("%s: expected header starting with subject_id,origin_id" % path)
    header = rows[0]
    n_meta = 2 + len(extra)
    if tuple(header[2:n_meta]) != tuple(extra):
        raise DataError("%s: expected extra columns %s" % (path, list(extra)))
    names = tuple(header[n_meta:])
    bio = set()
    if any(n in STAT_NAMES for n in names):
        bio.add(HR)
    if any(n in GAIT_NAMES for n in names):
        bio.add(GAIT)
    if any(n.startswith("MFCC") for n in names):
        bio.add(BREATH)
    vectors, cols = [], {e: [] for e in extra}
    for lineno, row in enumerate(rows[1:], start=2 + skipped):
        if len(row) != len(header):
            raise DataError("%s: row %d has %d fields, expected %d" % (path, lineno, len(row), len(header)))
        try:
            vals = [float(c) for c in row[n_meta:]]
        except ValueError:
            raise DataError("%s: row %d: non-numeric feature value" % (path, lineno)) from None
        for e, c in zip(extra, row[2:n_meta]):
            cols[e].append(c)
        vectors.append(FeatureVector(names, vals, bio, row[0], row[1]))
    return vectors, cols
