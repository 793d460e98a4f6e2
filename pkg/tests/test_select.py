import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearauth.errors import ConfigError, DataError
from wearauth.select import (correlation_filter, f_scores, prefix_by_importance, run_selector, select_from_model,
                             select_k_best)


def test_identical_columns():
    x = np.random.default_rng(0).standard_normal(50)
    rep = correlation_filter(np.column_stack([x, x]), 0.9, ["a", "b"])
    assert rep.kept == ("a",)


def test_negated_column():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(200)
    y = rng.standard_normal(200)
    y -= (x @ y) / (x @ x) * x  # exactly orthogonal
    rep = correlation_filter(np.column_stack([x, -x, y]), 0.9, ["x", "-x", "y"])
    assert rep.kept == ("x", "y")


def test_constant_columns_dropped():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(20), rng.standard_normal(20)])
    rep = correlation_filter(X, 0.9, ["c", "v"])
    assert rep.kept == ("v",) and rep.params["dropped_constant"] == ["c"]


@given(st.integers(0, 10_000), st.floats(0.2, 0.99))
def test_correlation_output_pairwise_below_threshold(seed, thr):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((30, 3))
    X = np.column_stack([base, base @ rng.standard_normal((3, 5)) + 0.1 * rng.standard_normal((30, 5))])
    rep = correlation_filter(X, thr)
    K = X[:, rep.indices]
    if K.shape[1] > 1:
        r = np.corrcoef(K, rowvar=False)
        assert np.all(np.abs(r[np.triu_indices_from(r, 1)]) < thr)


def test_hr_features_filter_to_small_subset(window_data):
    hr = window_data.columns(["HR"])
    rep = correlation_filter(hr.X, 0.9, hr.names)
    assert 2 <= len(rep.kept) < 21
    assert "μ" in rep.kept


def test_prefix_example():
    assert prefix_by_importance([0.5, 0.3, 0.15, 0.05], 0.9) == [0, 1, 2]
    assert prefix_by_importance([0.5, 0.3, 0.2, 0.0], 1.0) == [0, 1, 2]


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.floats(0.05, 1.0))
def test_prefix_minimality(raw, p):
    imp = np.asarray(raw)
    if imp.sum() == 0:
        return
    imp = imp / imp.sum()
    keep = prefix_by_importance(imp, p)
    order = np.argsort(-imp, kind="stable")
    assert keep == list(order[:len(keep)])
    assert imp[keep].sum() >= p - 1e-9
    assert imp[keep[:-1]].sum() < p


@settings(max_examples=10)
@given(st.integers(0, 1000))
def test_from_model_prefix_minimal(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((60, 8))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    rep = select_from_model(X, y, 0.9, n_estimators=20, seed=seed)
    imp = np.array([rep.scores[n] for n in rep.scores])
    assert imp.sum() == pytest.approx(1.0)
    kept = [rep.scores[n] for n in rep.kept]
    assert kept == sorted(kept, reverse=True)
    assert sum(kept) >= 0.9 - 1e-9 and sum(kept[:-1]) < 0.9


def test_f_scores_against_direct_formula():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 4))
    y = rng.integers(0, 2, 40)
    for j in range(4):
        a, b = X[y == 0, j], X[y == 1, j]
        m = X[:, j].mean()
        ssb = len(a) * (a.mean() - m) ** 2 + len(b) * (b.mean() - m) ** 2
        ssw = ((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()
        assert f_scores(X, y)[j] == pytest.approx(ssb / (ssw / 38))
    sp = pytest.importorskip("scipy.stats")
    np.testing.assert_allclose(f_scores(X, y), sp.f_oneway(X[y == 0], X[y == 1]).statistic)


def test_label_copy_ranked_first():
    rng = np.random.default_rng(4)
    y = rng.integers(0, 2, 100)
    X = np.column_stack([rng.standard_normal(100), y + 0.01 * rng.standard_normal(100), rng.standard_normal(100)])
    assert select_k_best(X, y, 1, ["n1", "copy", "n2"]).kept == ("copy",)


@given(st.integers(0, 10_000), st.integers(1, 15))
def test_k_best_exact_count_and_permutation(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((30, 15))
    y = np.arange(30) % 2
    names = ["f%d" % i for i in range(15)]
    rep = select_k_best(X, y, k, names)
    assert len(rep.kept) == k
    perm = rng.permutation(15)
    rep2 = select_k_best(X[:, perm], y, k, [names[i] for i in perm])
    assert set(rep2.kept) == set(rep.kept)


def test_k_best_ten_of_79(event_data):
    rep = select_k_best(event_data.X, event_data.labels, 10, event_data.names)
    assert len(event_data.names) == 79 and len(rep.kept) == 10
    assert [rep.scores[n] for n in rep.kept] == sorted((rep.scores[n] for n in rep.kept), reverse=True)


def test_k_best_errors():
    X, y = np.random.default_rng(0).standard_normal((10, 3)), np.arange(10) % 2
    with pytest.raises(ConfigError):
        select_k_best(X, y, 4)
    with pytest.raises(ConfigError):
        select_k_best(X, y, 0)
    with pytest.raises(DataError):
        select_k_best(X, np.zeros(10), 2)
    with pytest.raises(DataError):
        correlation_filter(np.empty((0, 3)))


def test_report_json_and_dispatch():
    X, y = np.random.default_rng(0).standard_normal((20, 4)), np.arange(20) % 2
    rep = run_selector("k_best", X, y, list("abcd"), k=2)
    d = json.loads(rep.to_json())
    assert d["method"] == "k_best" and len(d["kept"]) == 2 and set(d["scores"]) == set("abcd")
    with pytest.raises(ConfigError):
        run_selector("lasso", X, y)
