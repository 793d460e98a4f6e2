import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import tone
from wearauth import dsp
from wearauth.errors import DataError
from wearauth.features import (GAIT_NAMES, MFCC_NAMES, STAT_NAMES, FeatureVector, MfccConfig, fuse_instance,
                               gait_features, mfcc_features, mfcc_frames, read_feature_csv, stat_features,
                               stat_values, write_feature_csv)
from wearauth.ingest import AudioClip, GaitStream, Window

windows = arrays(np.float64, st.integers(2, 40), elements=st.floats(-1e3, 1e3, allow_nan=False))


def ref_stats(x):
    x = np.asarray(x, float)
    n = len(x)
    mu = sum(x) / n
    srt = sorted(x)
    mdn = (srt[(n - 1) // 2] + srt[n // 2]) / 2
    var = sum((v - mu) ** 2 for v in x) / (n - 1)

    def q(p):
        h = (n - 1) * p
        lo = int(np.floor(h))
        hi = min(lo + 1, n - 1)
        return srt[lo] + (h - lo) * (srt[hi] - srt[lo])

    m2 = sum((v - mu) ** 2 for v in x) / n
    m3 = sum((v - mu) ** 3 for v in x) / n
    m4 = sum((v - mu) ** 4 for v in x) / n
    sd = np.sqrt(var)
    E = sum(v * v for v in x)
    p25, p75 = q(0.25), q(0.75)
    absdev = sorted(abs(v - mdn) for v in x)
    return {
        "μ": mu, "Mdn": mdn, "σ": sd, "σ²": var, "cov": sd / mu, "ran": srt[-1] - srt[0],
        "coran": (srt[-1] - srt[0]) / (srt[-1] + srt[0]), "p25": p25, "p75": p75, "max": srt[-1],
        "iqr": p75 - p25, "coi": (p75 - p25) / (p75 + p25),
        "mad_Mdn": (absdev[(n - 1) // 2] + absdev[n // 2]) / 2, "mad_μ": sum(abs(v - mu) for v in x) / n,
        "E": E, "P": E / n, "rms": np.sqrt(E / n), "rss": np.sqrt(E), "snr": mu / sd,
        "γ": m3 / m2 ** 1.5, "κ": m4 / m2 ** 2,
    }


def test_names_and_count():
    assert len(STAT_NAMES) == 21 and len(GAIT_NAMES) == 18 and len(MFCC_NAMES) == 40
    assert STAT_NAMES[:3] == ("μ", "Mdn", "σ")
    assert GAIT_NAMES[:3] == ("X-acc μ", "X-acc σ²", "X-acc κ")


def test_constant_window():
    f = stat_features(Window(np.full(10, 2.0))).as_dict()
    for name in ("σ²", "ran", "cov", "snr", "γ", "κ"):
        assert f[name] == 0
    assert f["E"] == 40 and f["P"] == 4 and f["rms"] == 2 and f["rss"] == pytest.approx(np.sqrt(40))


def test_one_to_ten():
    f = stat_features(np.arange(1.0, 11.0)).as_dict()
    assert f["μ"] == 5.5 and f["Mdn"] == 5.5 and f["E"] == 385 and f["P"] == 38.5
    assert f["rss"] == pytest.approx(19.621, abs=1e-3)
    ref = ref_stats(np.arange(1.0, 11.0))
    for k in STAT_NAMES:
        assert f[k] == pytest.approx(ref[k], rel=1e-12), k


@given(arrays(np.float64, st.integers(2, 30), elements=st.floats(0.5, 200)))
def test_stats_match_reference(x):
    assume(x.max() > x.min() + 1e-6)
    f = dict(zip(STAT_NAMES, stat_values(x)))
    ref = ref_stats(x)
    for k in STAT_NAMES:
        assert f[k] == pytest.approx(ref[k], rel=1e-7, abs=1e-9), k


@given(windows, st.floats(-100, 100))
def test_shift_properties(x, c):
    assume(x.max() - x.min() > 1e-3)
    a, b = dict(zip(STAT_NAMES, stat_values(x))), dict(zip(STAT_NAMES, stat_values(x + c)))
    for k in ("μ", "Mdn", "p25", "p75", "max"):
        assert b[k] == pytest.approx(a[k] + c, abs=1e-6)
    for k in ("σ²", "iqr", "ran", "mad_Mdn"):
        assert b[k] == pytest.approx(a[k], rel=1e-6, abs=1e-6)
    for k in ("γ", "κ"):
        assert b[k] == pytest.approx(a[k], rel=1e-5, abs=1e-5)


@given(arrays(np.float64, st.integers(2, 30), elements=st.floats(0.5, 100)), st.floats(0.01, 100))
def test_scale_properties(x, s):
    assume(x.max() - x.min() > 1e-3)
    a, b = dict(zip(STAT_NAMES, stat_values(x))), dict(zip(STAT_NAMES, stat_values(x * s)))
    assert b["σ"] == pytest.approx(s * a["σ"], rel=1e-9)
    for k in ("γ", "κ", "cov"):
        assert b[k] == pytest.approx(a[k], rel=1e-6, abs=1e-9)


def test_short_or_nan_window():
    with pytest.raises(DataError):
        stat_features(np.array([1.0]))
    with pytest.raises(DataError):
        stat_features(np.array([1.0, np.nan]))


def test_gait_features():
    g = GaitStream(np.zeros((10, 6)), 0.05)
    f = gait_features(g)
    assert len(f) == 18 and np.all(f.values == 0)
    d = np.zeros((10, 6))
    d[:, 0] = np.arange(1, 11)
    f = gait_features(GaitStream(d, 0.05)).as_dict()
    assert f["X-acc μ"] == 5.5 and f["X-acc σ²"] == pytest.approx(9.1667, abs=1e-4)
    x = np.arange(1, 11.0)
    assert f["X-acc κ"] == pytest.approx(np.mean((x - 5.5) ** 4) / np.mean((x - 5.5) ** 2) ** 2)


def test_mfcc_silence_only_first_coefficient():
    f = mfcc_features(AudioClip(np.zeros(4096), 22050))
    assert len(f) == 40 and f.names == MFCC_NAMES
    assert f.values[0] == pytest.approx(np.sqrt(64) * np.log(1e-10))
    np.testing.assert_allclose(f.values[1:], 0, atol=1e-9)


def test_mfcc_matches_direct_pipeline():
    rng = np.random.default_rng(0)
    x = 0.3 * rng.uniform(-1, 1, 5000)
    cfg = MfccConfig()
    y = np.concatenate([[x[0]], x[1:] - 0.97 * x[:-1]])
    fb = dsp.build_mel_filterbank(64, 2048, 22050)
    frames = []
    for s in range(0, 5000 - 2048 + 1, 512):
        seg = y[s:s + 2048] * dsp.window("hann", 2048)
        p = np.abs(np.fft.rfft(seg)) ** 2
        frames.append(dsp.dct_ii(np.log(np.maximum(fb.weights @ p, 1e-10)), 40))
    ref = np.mean(frames, axis=0)
    np.testing.assert_allclose(mfcc_features(AudioClip(x, 22050), cfg).values, ref, rtol=1e-9, atol=1e-9)


def test_mfcc_discriminates_tones():
    a = mfcc_features(tone(440, 0.5)).values
    b = mfcc_features(tone(880, 0.5)).values
    assert np.linalg.norm(a - b) > 0.1


@given(st.integers(0, 1000), st.integers(0, 511))
def test_mfcc_padding_invariance(seed, pad):
    x = 0.2 * np.random.default_rng(seed).uniform(-1, 1, 3000)
    a = mfcc_features(AudioClip(x, 22050)).values
    b = mfcc_features(AudioClip(np.concatenate([x, np.zeros(pad)]), 22050)).values
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_mfcc_short_event():
    with pytest.raises(DataError):
        mfcc_frames(np.ones(100), 22050)
    assert len(mfcc_features(AudioClip(np.full(100, 0.1), 22050), pad=True)) == 40


def test_fuse():
    hr = stat_features(np.arange(1.0, 11.0), "s", "o1")
    g = gait_features(GaitStream(np.random.default_rng(0).standard_normal((10, 6)), 0.05, "s"), "o2")
    b = mfcc_features(AudioClip(np.zeros(2048), 22050, "s", "o3"))
    f2 = fuse_instance([hr, g])
    assert len(f2) == 39 and f2.biometrics == {"HR", "GAIT"} and f2.origin_id == "o1|o2"
    f3 = fuse_instance([hr, g, b])
    assert len(f3) == 79 and f3.biometrics == {"HR", "GAIT", "BREATH"}
    with pytest.raises(DataError):
        fuse_instance([hr, stat_features(np.arange(3.0), "t")])
    with pytest.raises(DataError):
        fuse_instance([hr, hr])


def test_feature_vector_invariants():
    with pytest.raises(DataError):
        FeatureVector(("a", "a"), [1, 2])
    with pytest.raises(DataError):
        FeatureVector(("a",), [np.inf])
    with pytest.raises(DataError):
        FeatureVector(("a", "b"), [1.0])
    fv = FeatureVector(("a", "b"), [1.0, 2.0])
    np.testing.assert_array_equal(fv.take(["b", "a"]), [2.0, 1.0])
    with pytest.raises(DataError):
        fv.take(["c"])


def test_feature_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    vecs = [stat_features(rng.uniform(60, 90, 10), "s%d" % (i % 2), "o%d" % i) for i in range(5)]
    write_feature_csv(tmp_path / "f.csv", vecs, {"augmentation": list("abcde")}, meta={"seed": 3})
    back, extra = read_feature_csv(tmp_path / "f.csv", ("augmentation",))
    assert extra["augmentation"] == list("abcde")
    for a, b in zip(vecs, back):
        assert a.names == b.names and a.subject_id == b.subject_id and a.origin_id == b.origin_id
        np.testing.assert_array_equal(a.values, b.values)
    assert (tmp_path / "f.csv").read_text().startswith("# seed=3\n")
