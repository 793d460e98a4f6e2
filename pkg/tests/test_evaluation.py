import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearauth.errors import ConfigError, DataError
from wearauth.evaluation import (
    METRICS, ConfusionCounts, ExperimentConfig, LabeledDataset, MetricsReport, SubjectData,
    auc_roc, build_window_dataset, compute_metrics, format_table, loo_plan, run_experiment,
    threshold_sweep,
)
from wearauth.learn import ClassifierSpec


def toy_dataset(n_gen=6, imps=(("b", 5), ("c", 5)), n_aug=0, seed=0):
    """Tiny dataset: genuine subject 'a' plus imposters, each original with ``n_aug`` copies."""
    rng = np.random.default_rng(seed)
    rows, labels, subs, origins, aug = [], [], [], [], []
    groups = [("a", n_gen, 0)] + [(s, n, 1) for s, n in imps]
    for sid, n, lab in groups:
        for i in range(n):
            for copy in range(n_aug + 1):
                rows.append(rng.standard_normal(3) + 3 * lab)
                labels.append(lab)
                subs.append(sid)
                origins.append("%s/%d" % (sid, i))
                aug.append(copy > 0)
    return LabeledDataset(np.array(rows), ("x", "y", "z"), labels, subs, origins, aug)


# ----------------------------------------------------------------- metrics

def test_worked_confusion_example():
    m = compute_metrics(ConfusionCounts(tp=9, tn=8, fp=2, fn=1))
    assert m.acc == pytest.approx(0.85)
    assert m.rmse == pytest.approx(math.sqrt(0.15))
    assert m.fpr == pytest.approx(0.2)
    assert m.fnr == pytest.approx(0.1)
    assert m.f1 == pytest.approx(18 / 21)


def test_undefined_ratios_are_none():
    m = compute_metrics(ConfusionCounts(tp=0, tn=4, fp=0, fn=0))
    assert m.acc == 1.0 and m.fnr is None and m.f1 is None and m.fpr == 0.0
    m = compute_metrics(ConfusionCounts(tp=3, tn=0, fp=0, fn=0))
    assert m.fpr is None
    with pytest.raises(DataError):
        compute_metrics(ConfusionCounts(0, 0, 0, 0))
    with pytest.raises(DataError):
        ConfusionCounts(-1, 0, 0, 0)


def test_from_labels_counts():
    c = ConfusionCounts.from_labels([0, 0, 1, 1, 0], [0, 1, 1, 0, 0])
    assert (c.tp, c.tn, c.fp, c.fn) == (2, 1, 1, 1)


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
def test_rmse_acc_identity(tp, tn, fp, fn):
    if tp + tn + fp + fn == 0:
        return
    m = compute_metrics(ConfusionCounts(tp, tn, fp, fn))
    assert abs(m.rmse ** 2 + m.acc - 1) < 1e-12
    assert 0 <= m.acc <= 1


def test_auc_examples():
    assert auc_roc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 1.0
    assert auc_roc([0.5, 0.5, 0.5, 0.5], [0, 0, 1, 1]) == 0.5
    assert auc_roc([0.9, 0.4, 0.6, 0.1], [0, 0, 1, 1]) == 0.75
    assert auc_roc([0.1, 0.9], [0, 1]) == 0.0
    with pytest.raises(DataError):
        auc_roc([0.1, 0.2], [0, 0])


@given(st.lists(st.integers(0, 20), min_size=4, max_size=30), st.integers(0, 10_000))
def test_auc_invariant_under_monotone_map(scores, seed):
    y = np.random.default_rng(seed).integers(0, 2, len(scores))
    if len(set(y)) < 2:
        return
    s = np.array(scores) / 20.0
    assert auc_roc(s, y) == pytest.approx(auc_roc(np.exp(3 * s) - 7, y), abs=1e-12)


def test_sweep_extremes_and_validation():
    s, y = [0.9, 0.7, 0.3, 0.6, 0.2], [0, 0, 0, 1, 1]
    pts = threshold_sweep(s, y, [0.0, 0.5, 1.01])
    assert (pts[0].fpr, pts[0].fnr) == (1.0, 0.0)
    assert pts[1].fpr == 0.5 and pts[1].fnr == pytest.approx(1 / 3)
    assert (pts[2].fpr, pts[2].fnr) == (0.0, 1.0)
    with pytest.raises(ConfigError):
        threshold_sweep(s, y, [0.5, 0.2])
    with pytest.raises(DataError):
        threshold_sweep(s, [0] * 5)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=40), st.integers(0, 10_000))
def test_sweep_monotone(scores, seed):
    y = np.random.default_rng(seed).integers(0, 2, len(scores))
    if len(set(y)) < 2:
        return
    pts = threshold_sweep(scores, y)
    assert all(b.fpr <= a.fpr and b.fnr >= a.fnr for a, b in zip(pts, pts[1:]))


def test_report_formatting():
    rep = MetricsReport([{m: 0.9 for m in METRICS}, {**{m: 1.0 for m in METRICS}, "F1": None}])
    assert rep.mean("ACC") == pytest.approx(0.95)
    assert rep.std("ACC") == pytest.approx(0.05)
    assert rep.formatted("ACC") == "0.95 (0.05)"
    assert rep.formatted("F1") == "0.90 (0.00)"
    assert MetricsReport([{m: None for m in METRICS}]).formatted("FPR") == "n/a"
    assert set(rep.summary()) == set(METRICS)


# ----------------------------------------------------------------- dataset

def test_dataset_lineage_checks():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 1)), ("x",), [0, 0], ["a", "a"], ["o", "o"], [False, False])
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((1, 1)), ("x",), [0], ["a"], ["o"], [True])
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 2)), ("x",), [0, 0], ["a", "a"], ["o", "p"], [False, False])


def test_window_dataset_requires_gait(subjects):
    broken = [SubjectData(s.subject_id, s.hr, None if i == 1 else s.gait) for i, s in enumerate(subjects)]
    with pytest.raises(ConfigError, match="gait"):
        run_experiment("HRG", broken)
    with pytest.raises(DataError):
        build_window_dataset(subjects[:2])


# ---------------------------------------------------------------- LOO plan

def test_plan_shape_n6():
    ds = toy_dataset()
    plan = loo_plan(ds, min_ratio=0)
    assert len(plan) == 6
    for tr, te in plan.iterations:
        assert sorted(ds.labels[te].tolist()) == [0, 1]
        assert np.sum(ds.labels[tr] == 0) == 5
        counts = sorted(np.sum(ds.subject_ids[tr] == s) for s in ("b", "c"))
        assert counts == [2, 3]


def test_plan_rotates_imposter_roles():
    ds = toy_dataset()
    plan = loo_plan(ds, min_ratio=0)
    test_subjects = [ds.subject_ids[te][ds.labels[te] == 1][0] for _, te in plan.iterations]
    assert test_subjects == ["b", "c"] * 3
    genuine_tests = [ds.origin_ids[te][ds.labels[te] == 0][0] for _, te in plan.iterations]
    assert genuine_tests == ["a/%d" % i for i in range(6)]
    larger = [max(("b", "c"), key=lambda s: np.sum(ds.subject_ids[tr] == s)) for tr, _ in plan.iterations]
    assert set(larger) == {"b", "c"}


@settings(max_examples=30)
@given(st.integers(2, 9), st.lists(st.integers(9, 12), min_size=2, max_size=4), st.integers(0, 2))
def test_plan_exclusive_and_balanced(n_gen, imp_counts, n_aug):
    imps = tuple(("i%d" % k, c) for k, c in enumerate(imp_counts))
    ds = toy_dataset(n_gen, imps, n_aug)
    plan = loo_plan(ds, min_ratio=0)
    assert len(plan) == n_gen
    for tr, te in plan.iterations:
        assert not set(ds.origin_ids[tr]) & set(ds.origin_ids[te])
        # descendants travel with their original
        for rows in (tr, te):
            origins = set(ds.origin_ids[rows])
            assert len(rows) == len(origins) * (n_aug + 1)
        assert np.sum(~ds.is_augmented[tr] & (ds.labels[tr] == 1)) == n_gen - 1
        per = [np.sum(~ds.is_augmented[tr] & (ds.subject_ids[tr] == s)) for s, _ in imps]
        assert max(per) - min(per) <= 1


def test_plan_errors(caplog):
    with pytest.raises(DataError):
        loo_plan(toy_dataset(n_gen=1), min_ratio=0)
    with pytest.raises(DataError):
        loo_plan(toy_dataset(imps=(("b", 5),)), min_ratio=0)
    with pytest.raises(DataError):
        loo_plan(toy_dataset(n_gen=8, imps=(("b", 2), ("c", 2))), min_ratio=0)
    with pytest.raises(DataError, match="instances"):
        loo_plan(toy_dataset(), strict=True)
    loo_plan(toy_dataset())
    assert "instances" in caplog.text


def test_n_genuine_limits_iterations():
    assert len(loo_plan(toy_dataset(), n_genuine=4, min_ratio=0)) == 4


# -------------------------------------------------------------- experiment

def test_experiment_schema_and_identity(window_data):
    res = run_experiment("HR", window_data, ExperimentConfig(n_genuine=8))
    d = res.to_dict()
    assert set(d["metrics"]) == set(METRICS)
    assert len(d["per_iteration"]) == 8
    for it in d["per_iteration"]:
        assert abs(it["RMSE"] - math.sqrt(1 - it["ACC"])) < 1e-12
    row = res.table_row()
    assert list(row) == ["Model", "Classifier (parameters)", "Feature count", "ACC", "RMSE",
                         "FPR", "FNR", "F1 score", "AUC-ROC"]
    assert row["Feature count"] == 10
    assert "HR" in format_table([res])


def test_experiment_is_deterministic(window_data):
    cfg = ExperimentConfig(n_genuine=6)
    a = run_experiment("HRG", window_data, cfg).to_json()
    b = run_experiment("HRG", window_data, cfg).to_json()
    assert a == b


def test_hrgb_knn_accuracy(event_data):
    res = run_experiment("HRGB", event_data, ExperimentConfig(n_genuine=12))
    assert res.spec == ClassifierSpec("knn", {"k": 2})
    assert res.report.mean("ACC") >= 0.9


def test_selection_uses_training_rows_only(window_data):
    res = run_experiment("HR", window_data, ExperimentConfig(n_genuine=4))
    assert len(res.selections) == 4
    assert all(len(s.kept) == 10 for s in res.selections)


def test_unknown_family():
    with pytest.raises(ConfigError):
        run_experiment("XYZ", [])
