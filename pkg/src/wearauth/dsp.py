"""Signal-processing kernels: FFT magnitudes, mel filterbanks, DCT-II,
linear resampling, and WSOLA time stretching."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .ingest import AudioClip


@dataclass(frozen=True)
class FrameConfig:
    frame_len: int = 2048
    hop: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.frame_len <= 0 or self.frame_len & (self.frame_len - 1):
            raise ConfigError("frame_len must be a power of two, got %d" % self.frame_len)
        if not 0 < self.hop <= self.frame_len:
            raise ConfigError("hop must satisfy 0 < hop <= frame_len")
        if self.window not in ("hann", "rect"):
            raise ConfigError("window must be 'hann' or 'rect', got %r" % self.window)


def next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


@lru_cache(maxsize=32)
def _window(name: str, n: int) -> np.ndarray:
    if name == "rect":
        w = np.ones(n)
    else:
        # periodic Hann: 50%-overlapped copies sum to exactly one
        w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


def window(name: str, n: int) -> np.ndarray:
    return _window(name, n)


def fft(x) -> np.ndarray:
    """Complex DFT of ``x``, zero-padded to the next power of two."""
    x = np.asarray(x)
    n = next_pow2(x.shape[0])
    if n != x.shape[0]:
        x = np.concatenate([x, np.zeros(n - x.shape[0], dtype=x.dtype)])
    return kernels.fft_radix2(x)


def fft_magnitude(frame, cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    """One-sided magnitude spectrum (``frame_len // 2 + 1`` bins) of a windowed frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (cfg.frame_len,):
        raise DataError("frame length %d does not match frame_len %d" % (frame.shape[0], cfg.frame_len))
    spec = kernels.fft_radix2(frame * _window(cfg.window, cfg.frame_len))
    return np.abs(spec[:cfg.frame_len // 2 + 1])


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    n_filters: int
    fft_bins: int
    sample_rate: float
    weights: np.ndarray
    centers_hz: np.ndarray

    def apply(self, power: np.ndarray) -> np.ndarray:
        """Filter energies for one spectrum or a ``(frames, bins)`` stack."""
        return power @ self.weights.T


def build_mel_filterbank(n_filters: int, fft_bins: int, sample_rate: float,
                         fmin: float = 0.0, fmax: float | None = None) -> MelFilterbank:
    """Triangular filters with peaks equally spaced on the mel scale.

    Filter ``m`` rises from edge ``m`` to a unit peak at edge ``m+1`` and
    falls to zero at edge ``m+2``; the ``n_filters + 2`` edges span
    ``[fmin, fmax]`` uniformly in mel. Weights are evaluated at the exact
    bin frequencies ``k * sample_rate / fft_bins``.
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    if n_filters < 1:
        raise ConfigError("n_filters must be >= 1")
    if not (0 <= fmin < fmax <= sample_rate / 2.0):
        raise ConfigError("need 0 <= fmin < fmax <= sample_rate/2, got fmin=%g fmax=%g" % (fmin, fmax))
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    freqs = np.arange(fft_bins // 2 + 1) * (sample_rate / fft_bins)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs - lo) / (mid - lo)
    fall = (hi - freqs) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rise, fall))
    return MelFilterbank(n_filters, fft_bins, float(sample_rate), weights, edges[1:-1].copy())


@lru_cache(maxsize=16)
def _dct_matrix(n: int, ortho: bool) -> np.ndarray:
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (2 * m + 1) / (2.0 * n))
    if ortho:
        mat[0] *= math.sqrt(1.0 / n)
        mat[1:] *= math.sqrt(2.0 / n)
    mat.setflags(write=False)
    return mat


def dct_ii(x, n_out: int | None = None, ortho: bool = True) -> np.ndarray:
    """First ``n_out`` DCT-II coefficients along the last axis.

    Without ``ortho`` the unscaled sum ``X_k = sum_n x_n cos(pi k (2n+1) / 2N)``
    is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n_out is None:
        n_out = n
    if not 0 < n_out <= n:
        raise DataError("n_out=%d must be in [1, %d]" % (n_out, n))
    return x @ _dct_matrix(n, bool(ortho))[:n_out].T


def resample_array(x: np.ndarray, factor: float) -> np.ndarray:
    n_out = max(1, int(round(x.shape[0] / factor)))
    pos = np.arange(n_out) * factor
    return np.interp(pos, np.arange(x.shape[0]), x)


def resample(clip: AudioClip, factor: float) -> AudioClip:
    """Read the clip ``factor`` times faster by linear interpolation.

    The output has ``round(len / factor)`` samples at the same nominal rate,
    so every frequency is scaled by ``factor``. Not band-limited: content
    above ``rate / (2 * factor)`` aliases.
    """
    if not 0.1 <= factor <= 10.0:
        raise ConfigError("resample factor must be in [0.1, 10], got %g" % factor)
    if factor == 1.0:
        return clip
    return clip.with_samples(resample_array(clip.samples, factor))


def wsola(x: np.ndarray, rate: float, frame_len: int = 1024, tolerance: int = 256) -> np.ndarray:
    """Waveform-similarity overlap-add stretch of ``x`` to ``round(len / rate)`` samples.

    Hann frames with 50% overlap are taken near their nominal analysis
    positions, each shifted by up to ``tolerance`` samples to best continue
    the previously copied frame.
    """
    L = x.shape[0]
    n_out = max(1, int(round(L / rate)))
    N, hop, tol = frame_len, frame_len // 2, tolerance
    win = _window("hann", N)
    n_frames = -(-(n_out + N // 2) // hop) + 1
    front = N // 2 + tol
    back = int(math.ceil(n_frames * hop * rate)) + 2 * N + 2 * tol
    xp = np.concatenate([np.zeros(front), x, np.zeros(back)])
    out = np.zeros((n_frames - 1) * hop + N)
    prev = -1
    for k in range(n_frames):
        ideal = front + int(round(k * hop * rate)) - N // 2
        start = ideal
        if prev >= 0:
            template = xp[prev + hop:prev + hop + N]
            region = xp[ideal - tol:ideal + tol + N]
            corr = np.correlate(region, template, "valid")
            best = int(np.argmax(corr))
            if corr[best] > corr[tol]:
                start = ideal + best - tol
        out[k * hop:k * hop + N] += xp[start:start + N] * win
        prev = start
    return out[N // 2:N // 2 + n_out]


def time_stretch(clip: AudioClip, rate: float) -> AudioClip:
    """Change duration by ``1 / rate`` while keeping pitch (WSOLA)."""
    if not 0.25 <= rate <= 4.0:
        raise ConfigError("time-stretch rate must be in [0.25, 4], got %g" % rate)
    if rate == 1.0:
        return clip
    return clip.with_samples(wsola(clip.samples, rate))


def dominant_frequency(samples, sample_rate: float) -> float:
    """Frequency of the largest-magnitude FFT bin (Hann window, zero-padded x4)."""
    x = np.asarray(samples, dtype=np.float64)
    n = 4 * next_pow2(x.shape[0])
    xw = np.zeros(n)
    xw[:x.shape[0]] = x * np.hanning(x.shape[0])
    mag = np.abs(kernels.fft_radix2(xw)[:n // 2 + 1])
    return float(np.argmax(mag) * sample_rate / n)
