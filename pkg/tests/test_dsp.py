import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import tone
from wearauth import dsp
from wearauth.errors import ConfigError, DataError
from wearauth.ingest import AudioClip


def naive_dct(x):
    n = len(x)
    k = np.arange(n)
    out = np.array([np.sum(x * np.cos(np.pi * f * (2 * k + 1) / (2 * n))) for f in range(n)])
    scale = np.full(n, np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    return out * scale


def test_frame_config_validation():
    with pytest.raises(ConfigError):
        dsp.FrameConfig(1000, 100)
    with pytest.raises(ConfigError):
        dsp.FrameConfig(1024, 2048)
    with pytest.raises(ConfigError):
        dsp.FrameConfig(1024, 256, "kaiser")


def test_fft_zero_pads():
    x = np.random.default_rng(0).standard_normal(5)
    np.testing.assert_allclose(dsp.fft(x), np.fft.fft(x, 8), atol=1e-12)


def test_fft_magnitude_zero_frame():
    np.testing.assert_array_equal(dsp.fft_magnitude(np.zeros(256), dsp.FrameConfig(256, 64)), 0)


def test_fft_magnitude_cosine_peak():
    n, k = 256, 17
    frame = np.cos(2 * np.pi * k * np.arange(n) / n)
    mag = dsp.fft_magnitude(frame, dsp.FrameConfig(n, n, "rect"))
    assert mag.shape == (n // 2 + 1,)
    assert np.argmax(mag) == k
    others = np.delete(mag, k)
    assert np.max(others) < 1e-9


def test_fft_magnitude_length_mismatch():
    with pytest.raises(DataError):
        dsp.fft_magnitude(np.zeros(100), dsp.FrameConfig(256, 64))


@given(st.integers(0, 10_000), st.sampled_from([16, 64, 256]))
def test_parseval(seed, n):
    x = np.random.default_rng(seed).standard_normal(n)
    spec = dsp.fft(x)
    assert np.sum(np.abs(spec) ** 2) == pytest.approx(n * np.sum(x * x), rel=1e-6)
    # one-sided magnitudes reconstruct the two-sided energy
    mag = dsp.fft_magnitude(x, dsp.FrameConfig(n, n, "rect"))
    two_sided = mag[0] ** 2 + mag[-1] ** 2 + 2 * np.sum(mag[1:-1] ** 2)
    assert two_sided == pytest.approx(n * np.sum(x * x), rel=1e-6)


def test_periodic_hann():
    w = dsp.window("hann", 8)
    np.testing.assert_allclose(w, 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(8) / 8))
    np.testing.assert_array_equal(dsp.window("rect", 4), 1)


def test_mel_formula():
    assert dsp.hz_to_mel(1000.0) == pytest.approx(999.99, abs=0.01)
    assert dsp.hz_to_mel(0.0) == 0.0
    f = np.array([10.0, 440.0, 8000.0])
    np.testing.assert_allclose(dsp.mel_to_hz(dsp.hz_to_mel(f)), f)


def test_single_filter_spans_band():
    fb = dsp.build_mel_filterbank(1, 512, 16000, 0, 8000)
    freqs = np.arange(257) * 16000 / 512
    w = fb.weights[0]
    assert w.max() == pytest.approx(1.0, abs=0.05)
    assert np.all(w[(freqs > 0) & (freqs < 8000)] > 0)
    assert w[0] == 0 and w[-1] == pytest.approx(0, abs=1e-12)


def test_filter_centers_match_mel_spacing():
    fb = dsp.build_mel_filterbank(10, 2048, 22050, 0, 11025)
    mels = np.linspace(0, dsp.hz_to_mel(11025), 12)[1:-1]
    np.testing.assert_allclose(fb.centers_hz, dsp.mel_to_hz(mels))
    assert np.all(np.diff(dsp.hz_to_mel(fb.centers_hz)) > 0)


@pytest.mark.parametrize("n_filters", [4, 26, 64])
def test_filterbank_no_holes_and_nonnegative(n_filters):
    fb = dsp.build_mel_filterbank(n_filters, 2048, 22050)
    freqs = np.arange(1025) * 22050 / 2048
    inside = (freqs >= fb.centers_hz[0]) & (freqs <= fb.centers_hz[-1])
    assert np.all(fb.weights >= 0) and np.all(np.isfinite(fb.weights.sum(axis=1)))
    assert np.all(fb.weights[:, inside].max(axis=0) > 0)


def test_filterbank_bounds_checked():
    with pytest.raises(ConfigError):
        dsp.build_mel_filterbank(10, 512, 16000, 5000, 4000)
    with pytest.raises(ConfigError):
        dsp.build_mel_filterbank(10, 512, 16000, 0, 9000)
    with pytest.raises(ConfigError):
        dsp.build_mel_filterbank(0, 512, 16000)


def test_dct_constant_input():
    c = dsp.dct_ii(np.full(12, 3.0))
    assert c[0] == pytest.approx(3.0 * np.sqrt(12))
    np.testing.assert_allclose(c[1:], 0, atol=1e-12)


def test_dct_orthonormal_basis():
    M = dsp.dct_ii(np.eye(8))
    np.testing.assert_allclose(M @ M.T, np.eye(8), atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_dct_matches_textbook(seed):
    x = np.random.default_rng(seed).standard_normal(16)
    np.testing.assert_allclose(dsp.dct_ii(x), naive_dct(x), atol=1e-9)
    np.testing.assert_allclose(dsp.dct_ii(x, 5), naive_dct(x)[:5], atol=1e-9)


def test_dct_n_out_too_large():
    with pytest.raises(DataError):
        dsp.dct_ii(np.ones(4), 5)


def test_resample_identity_and_lengths():
    clip = tone(440, 0.5)
    assert np.array_equal(dsp.resample(clip, 1.0).samples, clip.samples)
    assert abs(len(dsp.resample(clip, 0.5)) - 2 * len(clip)) <= 1
    assert len(dsp.resample(clip, 3.0)) == round(len(clip) / 3.0)


def test_resample_moves_tone():
    clip = tone(440, 1.0)
    assert dsp.dominant_frequency(clip.samples, clip.sample_rate) == pytest.approx(440, rel=0.01)
    out = dsp.resample(clip, 2.0)
    assert dsp.dominant_frequency(out.samples, out.sample_rate) == pytest.approx(880, rel=0.01)


def test_resample_range():
    with pytest.raises(ConfigError):
        dsp.resample(tone(440, 0.1), 0.05)
    with pytest.raises(ConfigError):
        dsp.resample(tone(440, 0.1), 11)


@given(st.floats(0.1, 4), st.integers(50, 3000))
def test_resample_roundtrip_length(f, n):
    # lengths are rounded twice, so the drift is bounded by round(f / 2)
    clip = AudioClip(np.zeros(n), 8000)
    back = dsp.resample(dsp.resample(clip, f), 1 / f)
    assert abs(len(back) - n) <= 2


@pytest.mark.parametrize("rate", [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 4.0])
def test_time_stretch_duration_and_pitch(rate):
    clip = tone(440, 2.0)
    out = dsp.time_stretch(clip, rate)
    assert out.duration / clip.duration == pytest.approx(1 / rate, rel=0.02)
    assert dsp.dominant_frequency(out.samples, out.sample_rate) == pytest.approx(440, rel=0.03)


def test_time_stretch_rate_one_is_identity():
    clip = tone(300, 0.3)
    assert np.array_equal(dsp.time_stretch(clip, 1.0).samples, clip.samples)


def test_time_stretch_range():
    with pytest.raises(ConfigError):
        dsp.time_stretch(tone(440, 0.1), 5.0)
