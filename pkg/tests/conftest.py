import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wearauth.evaluation import SubjectData, build_event_dataset, build_window_dataset
from wearauth.ingest import DEFAULT_PROFILES, AudioClip, synth_subject

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SR = 22050


def tone(freq, seconds=2.0, sr=SR, amp=0.5, origin="tone"):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr, "s", origin)


def make_subjects(seed=0, profiles=DEFAULT_PROFILES):
    out = []
    for p in profiles:
        hr, gait, clips = synth_subject(seed, p)
        out.append(SubjectData(p.subject_id, hr, gait, clips))
    return out


@pytest.fixture(scope="session")
def subjects():
    return make_subjects(0)


@pytest.fixture(scope="session")
def window_data(subjects):
    return build_window_dataset(subjects, max_originals=24)


@pytest.fixture(scope="session")
def event_data(subjects):
    return build_event_dataset(subjects)


class StubModel:
    """Duck-typed stage model returning a fixed genuine score."""

    feature_names = ()

    def __init__(self, score):
        self.score = score
        self.calls = 0

    def predict(self, fv):
        from wearauth.learn import Prediction
        self.calls += 1
        return Prediction.from_score(self.score)

    def to_dict(self):
        return {"stub": self.score}


def still_gait(n=40, sd=0.0, seed=0):
    from wearauth.ingest import GaitStream
    d = np.zeros((n, 6))
    d[:, 2] = 9.81
    d[:, :3] += sd * np.random.default_rng(seed).standard_normal((n, 3))
    return GaitStream(d, 0.02, "s")


def moving_gait(n=100, amp=2.0):
    from wearauth.ingest import GaitStream
    d = np.zeros((n, 6))
    d[:, 2] = 9.81 + amp * np.sin(2 * np.pi * np.arange(n) / 25)
    d[:, 3] = 0.3
    return GaitStream(d, 0.02, "s")


def make_context(hr=True, gait=None, breath=False):
    """``gait`` is None, "still" or "moving"."""
    from wearauth.cascade import AuthContext
    from wearauth.ingest import Window
    w = Window(np.linspace(70, 80, 10)) if hr else None
    g = {None: None, "still": still_gait(), "moving": moving_gait()}[gait]
    b = tone(300, 0.5) if breath else None
    return AuthContext(w, g, b, "s")


@pytest.fixture(scope="session")
def trained_cascade(subjects):
    from wearauth.cascade import train_cascade
    from wearauth.evaluation import ExperimentConfig
    return train_cascade(subjects, cfg=ExperimentConfig(max_events=20))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
