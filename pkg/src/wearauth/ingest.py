"""Loading, segmentation, and synthetic generation of raw biometric streams.

Heart rate arrives as ``timestamp,bpm`` CSV, gait as
``timestamp,ax,ay,az,gx,gy,gz`` CSV, and breathing audio as PCM WAV.
Streams are cut into fixed windows and breathing clips into single
inhalation events before feature extraction.
"""
from __future__ import annotations

import configparser
import csv
import math
import struct
import zlib
from dataclasses import dataclass, fields
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_WINDOW = 10

GAIT_AXES = ("X-acc", "Y-acc", "Z-acc", "X-gy", "Y-gy", "Z-gy")


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    sample_period: float
    subject_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DataError("time series must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)):
            raise DataError("time series contains non-finite values")
        if not self.sample_period > 0:
            raise DataError("sample_period must be positive")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class GaitStream:
    """Six synchronized inertial axes, columns ordered as ``GAIT_AXES``."""

    data: np.ndarray
    sample_period: float
    subject_id: str = ""

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 6:
            raise DataError("gait stream needs shape (n, 6), got %s" % (d.shape,))
        if d.shape[0] == 0:
            raise DataError("gait stream is empty")
        if not np.all(np.isfinite(d)):
            raise DataError("gait stream contains non-finite values")
        if not self.sample_period > 0:
            raise DataError("sample_period must be positive")
        object.__setattr__(self, "data", d)

    def __len__(self):
        return self.data.shape[0]

    @property
    def accel(self) -> np.ndarray:
        return self.data[:, :3]

    def axis(self, name: str) -> TimeSeries:
        return TimeSeries(self.data[:, GAIT_AXES.index(name)], self.sample_period, self.subject_id)

    def windows(self, w: int = DEFAULT_WINDOW, overlap: int = 0) -> list["GaitStream"]:
        starts = _window_starts(len(self), w, overlap)
        return [GaitStream(self.data[s:s + w], self.sample_period, self.subject_id) for s in starts]


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    subject_id: str = ""
    origin_id: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise DataError("audio clip must be a non-empty 1-D array")
        if not self.sample_rate > 0:
            raise DataError("sample_rate must be positive")
        if not np.all(np.isfinite(s)):
            raise DataError("audio clip contains non-finite samples")
        if np.max(np.abs(s)) > 1.0:
            raise DataError("audio samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "AudioClip":
        """Copy of this clip carrying new samples (clipped to [-1, 1])."""
        return AudioClip(np.clip(samples, -1.0, 1.0), self.sample_rate, self.subject_id, self.origin_id)


@dataclass(frozen=True)
class Window:
    values: np.ndarray
    source: str = "HR"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DataError("window must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)):
            raise DataError("window contains non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


# --------------------------------------------------------------------- CSV

def _parse_time(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return datetime.fromisoformat(text.strip()).timestamp()


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_rows(path, n_cols: int, kind: str):
    path = Path(path)
    if not path.is_file():
        raise DataError("%s file not found: %s" % (kind, path))
    times, rows = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not all(_is_number(c) for c in row[1:n_cols]):
                continue  # header
            if len(row) < n_cols:
                raise DataError("%s: row %d has %d fields, expected %d" % (path, lineno, len(row), n_cols))
            try:
                t = _parse_time(row[0])
            except ValueError:
                raise DataError("%s: row %d: bad timestamp %r" % (path, lineno, row[0])) from None
            vals = []
            for c in row[1:n_cols]:
                try:
                    v = float(c)
                except ValueError:
                    raise DataError("%s: row %d: non-numeric value %r" % (path, lineno, c)) from None
                if not math.isfinite(v):
                    raise DataError("%s: row %d: non-finite value %r" % (path, lineno, c))
                vals.append(v)
            times.append(t)
            rows.append(vals)
    if not rows:
        raise DataError("%s: no data rows" % path)
    times = np.asarray(times)
    order = np.argsort(times, kind="stable")
    times = times[order]
    data = np.asarray(rows, dtype=np.float64)[order]
    gaps = np.diff(times)
    period = float(np.median(gaps)) if gaps.size else 1.0
    if not period > 0:
        raise DataError("%s: cannot infer sample period from timestamps" % path)
    return data, period


def load_heart_rate_csv(path, subject_id: str | None = None, w: int = DEFAULT_WINDOW) -> TimeSeries:
    """Read a ``timestamp,bpm`` file, ordered by timestamp.

    The sample period is the median timestamp gap, so a few missing rows do
    not distort it. Fewer than ``w`` rows is an error since no window could
    be formed.
    """
    data, period = _read_rows(path, 2, "heart-rate")
    if data.shape[0] < w:
        raise DataError("%s: insufficient samples (%d < window %d)" % (path, data.shape[0], w))
    return TimeSeries(data[:, 0], period, subject_id or Path(path).stem)


def load_gait_csv(path, subject_id: str | None = None) -> GaitStream:
    data, period = _read_rows(path, 7, "gait")
    return GaitStream(data, period, subject_id or Path(path).stem)


def write_heart_rate_csv(path, series: TimeSeries, t0: float = 0.0) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["timestamp", "bpm"])
        for i, v in enumerate(series.values):
            out.writerow([repr(t0 + i * series.sample_period), repr(float(v))])


def write_gait_csv(path, stream: GaitStream, t0: float = 0.0) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["timestamp", "ax", "ay", "az", "gx", "gy", "gz"])
        for i, row in enumerate(stream.data):
            out.writerow([repr(t0 + i * stream.sample_period)] + [repr(float(v)) for v in row])


# --------------------------------------------------------------------- WAV

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


def load_wav(path, subject_id: str | None = None, origin_id: str | None = None) -> AudioClip:
    """Parse a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.

    Stereo (or wider) input is averaged to mono. Integer samples are scaled
    by 1/32768; float samples are clipped to [-1, 1].
    """
    path = Path(path)
    if not path.is_file():
        raise DataError("audio file not found: %s" % path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise DataError("%s: truncated or non-RIFF/WAVE header" % path)
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid, size = struct.unpack_from("<4sI", raw, pos)
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise DataError("%s: truncated fmt chunk" % path)
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            tag = fmt[0]
            if tag == _EXTENSIBLE:
                if len(body) < 26:
                    raise DataError("%s: truncated extensible fmt chunk" % path)
                tag = struct.unpack_from("<H", body, 24)[0]
                fmt = (tag,) + fmt[1:]
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise DataError("%s: truncated header (missing fmt or data chunk)" % path)
    tag, channels, rate, _, _, bits = fmt
    if channels < 1 or rate <= 0:
        raise DataError("%s: invalid channel count or sample rate" % path)
    if tag == _PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif tag == _FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise DataError("%s: unsupported encoding (format tag %d, %d bits)" % (path, tag, bits))
    width = bits // 8 * channels
    n = len(data) // width
    if n == 0:
        raise DataError("%s: no audio frames" % path)
    frames = np.frombuffer(data[:n * width], dtype=dtype).reshape(n, channels).astype(np.float64) * scale
    mono = frames.mean(axis=1) if channels > 1 else frames[:, 0]
    mono = np.clip(mono, -1.0, 1.0)
    stem = path.stem
    return AudioClip(mono, int(rate), subject_id or stem, origin_id or stem)


def write_wav(path, clip: AudioClip, encoding: str = "float32") -> None:
    """Write a mono WAV; ``encoding`` is ``"float32"`` or ``"pcm16"``."""
    if encoding == "float32":
        tag, bits = _FLOAT, 32
        payload = clip.samples.astype("<f4").tobytes()
    elif encoding == "pcm16":
        tag, bits = _PCM, 16
        ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
        payload = ints.tobytes()
    else:
        raise ValueError("unknown encoding %r" % encoding)
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, clip.sample_rate, clip.sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# ------------------------------------------------------------ segmentation

def _window_starts(n: int, w: int, overlap: int) -> range:
    if w <= 0:
        raise DataError("window length must be positive, got %d" % w)
    if not 0 <= overlap < w:
        raise DataError("overlap must satisfy 0 <= overlap < w")
    if n < w:
        raise DataError("insufficient samples: %d < window %d" % (n, w))
    step = w - overlap
    return range(0, n - w + 1, step)


def segment_windows(series: TimeSeries, w: int = DEFAULT_WINDOW, overlap: int = 0,
                    source: str = "HR") -> list[Window]:
    """Cut a series into consecutive windows of ``w`` samples.

    With the default ``overlap=0`` this yields ``len // w`` windows and
    drops the incomplete tail.
    """
    return [Window(series.values[s:s + w], source) for s in _window_starts(len(series), w, overlap)]


@dataclass(frozen=True)
class EventConfig:
    frame_ms: float = 25.0
    threshold_factor: float = 2.0
    min_event_ms: float = 150.0
    max_event_ms: float = 2000.0
    # threshold never exceeds this fraction of the loudest frame's RMS
    peak_fraction: float = 0.5


def frame_rms(samples: np.ndarray, frame_len: int) -> np.ndarray:
    n = samples.shape[0] // frame_len
    frames = samples[:n * frame_len].reshape(n, frame_len)
    return np.sqrt(np.mean(frames * frames, axis=1))


def event_bounds(clip: AudioClip, cfg: EventConfig = EventConfig()) -> list[tuple[int, int]]:
    """Sample ranges ``[start, stop)`` of the breathing events in ``clip``.

    Frames whose RMS exceeds ``threshold_factor`` times the median frame RMS
    (capped at ``peak_fraction`` of the peak frame RMS) are active; each run
    of active frames within the duration limits is one event.
    """
    frame_len = max(1, int(round(cfg.frame_ms * 1e-3 * clip.sample_rate)))
    rms = frame_rms(clip.samples, frame_len)
    if rms.size == 0:
        return []
    threshold = min(cfg.threshold_factor * float(np.median(rms)), cfg.peak_fraction * float(rms.max()))
    active = rms > threshold
    if not active.any():
        return []
    edges = np.diff(np.concatenate([[0], active.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    min_frames = cfg.min_event_ms * 1e-3 * clip.sample_rate / frame_len
    max_frames = cfg.max_event_ms * 1e-3 * clip.sample_rate / frame_len
    return [(int(a) * frame_len, int(b) * frame_len) for a, b in zip(starts, stops)
            if min_frames <= b - a <= max_frames]


def extract_breath_events(clip: AudioClip, cfg: EventConfig = EventConfig()) -> list[AudioClip]:
    """Split a clip into single breathing events (see ``event_bounds``).

    Event ``i`` carries ``origin_id = "<clip origin>/e<i>"``.
    """
    return [AudioClip(clip.samples[a:b], clip.sample_rate, clip.subject_id,
                      "%s/e%d" % (clip.origin_id, i))
            for i, (a, b) in enumerate(event_bounds(clip, cfg))]


# --------------------------------------------------------------- synthesis

@dataclass(frozen=True)
class SubjectProfile:
    """Parameters of one synthetic subject.

    Heart rate is an AR(1) process around ``hr_mean``; gait is a sum of
    sinusoids at the step frequency on each axis; breathing is band-limited
    noise bursts centred on ``breath_formant``.
    """

    subject_id: str
    hr_mean: float = 72.0
    hr_std: float = 5.0
    hr_ar: float = 0.7
    n_hr: int = 1500
    hr_period: float = 60.0
    gait_freq: float = 1.9
    gait_amp: float = 2.0
    gait_noise: float = 0.3
    gyro_amp: float = 1.0
    gait_phase: float = 0.0
    n_gait: int = 1500
    gait_period: float = 0.05
    breath_formant: float = 600.0
    breath_bandwidth: float = 200.0
    breath_level: float = 0.3
    breath_events: int = 6
    breath_seconds: float = 5.0
    n_clips: int = 1
    sample_rate: int = 22050

    def __post_init__(self):
        if self.hr_std <= 0 and self.gait_amp <= 0 and self.gait_noise <= 0:
            raise ConfigError("profile %r is degenerate: zero variance everywhere" % self.subject_id)
        if min(self.n_hr, self.n_gait) < 1 or self.n_clips < 0:
            raise ConfigError("profile %r: sample counts must be positive" % self.subject_id)
        if self.hr_std < 0 or self.gait_amp < 0 or self.gait_noise < 0:
            raise ConfigError("profile %r: negative spread" % self.subject_id)
        if not 0 < self.breath_formant < self.sample_rate / 2:
            raise ConfigError("profile %r: breath_formant outside (0, Nyquist)" % self.subject_id)


DEFAULT_PROFILES = (
    SubjectProfile("genuine", hr_mean=72.0, gait_freq=1.8, gait_amp=2.0, gyro_amp=1.0,
                   gait_phase=0.0, breath_formant=500.0),
    SubjectProfile("imposter_a", hr_mean=75.0, gait_freq=2.0, gait_amp=2.6, gyro_amp=1.3,
                   gait_phase=0.6, breath_formant=850.0),
    SubjectProfile("imposter_b", hr_mean=69.0, gait_freq=1.7, gait_amp=1.6, gyro_amp=0.8,
                   gait_phase=1.2, breath_formant=1300.0),
)


def load_profiles(path) -> list[SubjectProfile]:
    """Read subject profiles from an INI-style file, one section per subject.

    Keys are ``SubjectProfile`` field names, e.g.::

        [genuine]
        hr_mean = 72
        gait_amp = 2.0
        breath_formant = 500
    """
    parser = configparser.ConfigParser()
    path = Path(path)
    if not path.is_file():
        raise ConfigError("profile file not found: %s" % path)
    parser.read(path)
    types = {f.name: f.type for f in fields(SubjectProfile)}
    profiles = []
    for section in parser.sections():
        kwargs = {}
        for key, text in parser.items(section):
            if key not in types or key == "subject_id":
                raise ConfigError("%s [%s]: unknown key %r" % (path, section, key))
            try:
                kwargs[key] = int(text) if types[key] in (int, "int") else float(text)
            except ValueError:
                raise ConfigError("%s [%s]: bad value for %s: %r" % (path, section, key, text)) from None
        profiles.append(SubjectProfile(section, **kwargs))
    if not profiles:
        raise ConfigError("%s: no profiles defined" % path)
    return profiles


def dump_profiles(profiles, path) -> None:
    parser = configparser.ConfigParser()
    for p in profiles:
        parser[p.subject_id] = {f.name: repr(getattr(p, f.name)) for f in fields(p) if f.name != "subject_id"}
    with Path(path).open("w") as fh:
        parser.write(fh)


def _breath_clip(rng, p: SubjectProfile, clip_index: int) -> AudioClip:
    sr = p.sample_rate
    n = int(round(p.breath_seconds * sr))
    x = rng.normal(0.0, 0.004, n)
    slot = n // max(1, p.breath_events)
    freqs = np.fft.rfftfreq(slot, 1.0 / sr)
    for k in range(p.breath_events):
        dur = int(rng.uniform(0.25, 0.38) * sr)
        start = k * slot + int(rng.uniform(0.05, 0.95) * (slot - dur))
        f0 = p.breath_formant * rng.uniform(0.95, 1.05)
        shape = (np.exp(-0.5 * ((freqs - f0) / p.breath_bandwidth) ** 2)
                 + 0.5 * np.exp(-0.5 * ((freqs - 2.4 * f0) / (1.5 * p.breath_bandwidth)) ** 2))
        spec = np.fft.rfft(rng.normal(size=slot)) * shape
        burst = np.fft.irfft(spec, slot)[:dur]
        burst /= np.sqrt(np.mean(burst ** 2)) + 1e-12
        env = np.sin(np.pi * np.arange(dur) / dur) ** 2
        x[start:start + dur] += p.breath_level * rng.uniform(0.8, 1.2) * env * burst
    x = np.clip(x, -1.0, 1.0)
    return AudioClip(x, sr, p.subject_id, "%s/clip%d" % (p.subject_id, clip_index))


def synth_subject(seed: int, profile: SubjectProfile) -> tuple[TimeSeries, GaitStream, list[AudioClip]]:
    """Deterministically generate one subject's heart rate, gait, and clips.

    The stream is seeded by ``(seed, crc32(subject_id))`` so subjects sharing
    a run seed still draw independent noise.
    """
    rng = np.random.default_rng([seed, zlib.crc32(profile.subject_id.encode())])
    p = profile
    eps = rng.normal(size=p.n_hr)
    hr = np.empty(p.n_hr)
    innov = p.hr_std * math.sqrt(max(1.0 - p.hr_ar ** 2, 0.0))
    hr[0] = p.hr_std * eps[0]
    for i in range(1, p.n_hr):
        hr[i] = p.hr_ar * hr[i - 1] + innov * eps[i]
    hr += p.hr_mean

    # stride-to-stride frequency jitter
    phase = 2 * np.pi * np.cumsum(p.gait_freq * (1 + 0.03 * rng.normal(size=p.n_gait))) * p.gait_period
    phase += p.gait_phase
    a, g = p.gait_amp, p.gyro_amp
    base = np.stack([
        a * np.sin(phase),
        0.6 * a * np.sin(2 * phase + 0.5),
        9.81 + 0.8 * a * np.sin(phase + 1.0) + 0.3 * a * np.sin(3 * phase),
        g * np.sin(phase + 0.3),
        0.7 * g * np.cos(phase) + 0.2 * g * np.sin(2 * phase),
        0.5 * g * np.sin(2 * phase + 1.1),
    ], axis=1)
    noise = p.gait_noise * rng.normal(size=(p.n_gait, 6))
    noise[:, 3:] *= 0.3
    gait = GaitStream(base + noise, p.gait_period, p.subject_id)

    clips = [_breath_clip(rng, p, c) for c in range(p.n_clips)]
    return TimeSeries(hr, p.hr_period, p.subject_id), gait, clips
