"""Binary classifiers with genuine-class confidence scores.

Four families are supported: k-nearest neighbours, Gaussian naive Bayes,
random forest and a kernel SVM trained with SMO. Every model standardizes
its inputs with statistics of the training data and reports
``score_genuine``, the model's confidence that an instance belongs to
class 0 (the device owner).
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

GENUINE, IMPOSTER = 0, 1
FAMILIES = ("knn", "gaussian_nb", "random_forest", "svm")
MODEL_FORMAT = "wearauth-model"
MODEL_VERSION = 1

DEFAULT_PARAMS = {
    "knn": {"k": 2, "p": 2.0},
    "gaussian_nb": {"var_smoothing": 1e-9},
    "random_forest": {"n_estimators": 100, "max_depth": None, "seed": 0},
    "svm": {"kernel": "rbf", "C": 1.0, "gamma": 0.01, "degree": 2, "tol": 1e-3, "max_passes": 100_000},
}

DEFAULT_GRIDS = {
    "knn": {"k": list(range(1, 11)), "p": [1.0, 2.0]},
    "random_forest": {"n_estimators": list(range(50, 501, 50))},
    "svm": ([{"kernel": "poly", "degree": d, "C": c} for d in (1, 2, 3) for c in (0.1, 1.0, 10.0)]
            + [{"kernel": "rbf", "gamma": g, "C": c} for g in (0.001, 0.01, 0.1) for c in (0.1, 1.0, 10.0)]),
    "gaussian_nb": {"var_smoothing": [1e-9, 1e-6, 1e-3]},
}


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError("unknown classifier family %r (choose from %s)" % (self.family, ", ".join(FAMILIES)))
        merged = dict(DEFAULT_PARAMS[self.family])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ConfigError("unknown %s parameters: %s" % (self.family, ", ".join(sorted(unknown))))
        merged.update(self.params)
        p = merged
        if self.family == "knn":
            p["k"] = int(p["k"])
            p["p"] = float(p["p"])
            if p["k"] < 1 or p["p"] < 1:
                raise ConfigError("knn needs k >= 1 and minkowski p >= 1")
        elif self.family == "random_forest":
            p["n_estimators"] = int(p["n_estimators"])
            p["seed"] = int(p["seed"])
            if p["max_depth"] is not None:
                p["max_depth"] = int(p["max_depth"])
                if p["max_depth"] < 1:
                    raise ConfigError("max_depth must be >= 1")
            if p["n_estimators"] < 1:
                raise ConfigError("n_estimators must be >= 1")
        elif self.family == "svm":
            if p["kernel"] not in ("poly", "rbf"):
                raise ConfigError("svm kernel must be 'poly' or 'rbf'")
            p["C"], p["gamma"], p["tol"] = float(p["C"]), float(p["gamma"]), float(p["tol"])
            p["degree"], p["max_passes"] = int(p["degree"]), int(p["max_passes"])
            if p["C"] <= 0 or p["gamma"] <= 0 or p["degree"] < 1:
                raise ConfigError("svm needs C > 0, gamma > 0, degree >= 1")
        else:
            p["var_smoothing"] = float(p["var_smoothing"])
            if p["var_smoothing"] < 0:
                raise ConfigError("var_smoothing must be >= 0")
        object.__setattr__(self, "params", merged)

    def describe(self) -> str:
        p = self.params
        if self.family == "knn":
            return "k-NN (k=%d, minkowski p=%g)" % (p["k"], p["p"])
        if self.family == "random_forest":
            return "RF (n estimators = %d)" % p["n_estimators"]
        if self.family == "svm":
            if p["kernel"] == "poly":
                return "SVM (poly. kernel, d=%d, C=%g)" % (p["degree"], p["C"])
            return "SVM (rbf kernel, gamma=%g, C=%g)" % (p["gamma"], p["C"])
        return "NB"

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


@dataclass(frozen=True)
class Prediction:
    label: int
    confidence: float
    score_genuine: float

    @classmethod
    def from_score(cls, score: float) -> "Prediction":
        score = float(score)
        label = GENUINE if score >= 0.5 else IMPOSTER
        return cls(label, max(score, 1.0 - score), score)


# ------------------------------------------------------------------ forest

@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.label[node]
            go_left = X[rows, np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "label")}

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["label"], dtype=np.int64))


def _grow_tree(X, y, sample, rng, max_features, max_depth):
    n_total = sample.shape[0]
    feature, threshold, left, right, label = [], [], [], [], []
    importance = np.zeros(X.shape[1])
    stack = [(sample, 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        n1 = int(y[idx].sum())
        n0 = idx.shape[0] - n1
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(GENUINE if n0 >= n1 else IMPOSTER)
        if n0 == 0 or n1 == 0 or idx.shape[0] < 2 or (max_depth is not None and depth >= max_depth):
            continue
        order = rng.permutation(X.shape[1]).astype(np.int64)
        f, t, gain = kernels.best_gini_split(X, y, idx, order, max_features)
        if f < 0:
            continue
        go_left = X[idx, f] <= t
        feature[node] = f
        threshold[node] = t
        importance[f] += gain * idx.shape[0] / n_total
        stack.append((idx[~go_left], depth + 1, node, False))
        stack.append((idx[go_left], depth + 1, node, True))
    tree = Tree(np.asarray(feature, dtype=np.int64), np.asarray(threshold), np.asarray(left, dtype=np.int64),
                np.asarray(right, dtype=np.int64), np.asarray(label, dtype=np.int64))
    return tree, importance


def fit_forest(X, y, n_estimators=100, max_depth=None, seed=0):
    """Bootstrap-aggregated Gini trees with sqrt(d) candidate features per split.

    Returns the trees and mean-decrease-in-impurity importances normalized to
    sum to one (all zeros if no tree ever split).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    n, d = X.shape
    max_features = max(1, int(np.sqrt(d)))
    trees = []
    total = np.zeros(d)
    for child in np.random.SeedSequence(seed).spawn(n_estimators):
        rng = np.random.default_rng(child)
        sample = rng.integers(0, n, n).astype(np.int64)
        tree, imp = _grow_tree(X, y, sample, rng, max_features, max_depth)
        s = imp.sum()
        if s > 0:
            total += imp / s
        trees.append(tree)
    s = total.sum()
    return trees, (total / s if s > 0 else total)


# ---------------------------------------------------------------- kernels

def kernel_matrix(A, B, kernel, degree=2, gamma=0.01):
    if kernel == "poly":
        return (A @ B.T + 1.0) ** degree
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


# ------------------------------------------------------------------ models

@dataclass
class TrainedModel:
    spec: ClassifierSpec
    feature_names: tuple
    mean: np.ndarray
    scale: np.ndarray
    state: dict
    classes: tuple = (GENUINE, IMPOSTER)

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise DataError("model expects %d features, got %d" % (len(self.feature_names), X.shape[1]))
        return (X - self.mean) / self.scale

    def scores(self, X) -> np.ndarray:
        """``score_genuine`` for each row of a raw feature matrix."""
        Z = self.standardize(X)
        fam, st, p = self.spec.family, self.state, self.spec.params
        if fam == "knn":
            k = min(p["k"], st["y"].shape[0])
            d = kernels.minkowski_cdist(Z, st["X"], p["p"])
            nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
            return (st["y"][nearest] == GENUINE).mean(axis=1)
        if fam == "gaussian_nb":
            ll = (-0.5 * np.log(2.0 * np.pi * st["var"]).sum(1)[None, :]
                  - 0.5 * (((Z[:, None, :] - st["theta"][None]) ** 2) / st["var"][None]).sum(2)
                  + st["log_prior"][None, :])
            top = ll.max(axis=1, keepdims=True)
            post = np.exp(ll - top)
            return post[:, 0] / post.sum(axis=1)
        if fam == "random_forest":
            votes = np.zeros(Z.shape[0])
            for tree in st["trees"]:
                votes += tree.apply(Z) == GENUINE
            return votes / len(st["trees"])
        margin = self.decision_function(X)
        return 0.5 * (1.0 + np.tanh(0.5 * margin))

    def decision_function(self, X) -> np.ndarray:
        """Signed SVM margin; positive means genuine."""
        if self.spec.family != "svm":
            raise ConfigError("decision_function is only defined for svm models")
        Z = self.standardize(X)
        p, st = self.spec.params, self.state
        K = kernel_matrix(Z, st["support"], p["kernel"], p["degree"], p["gamma"])
        return K @ st["coef"] + st["bias"]

    def predict_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        s = self.scores(X)
        return np.where(s >= 0.5, GENUINE, IMPOSTER), s

    def predict(self, x) -> Prediction:
        return predict(self, x)

    @property
    def feature_importances(self) -> np.ndarray:
        if self.spec.family != "random_forest":
            raise ConfigError("feature importances are only defined for random forests")
        return self.state["importances"]

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        st = {}
        for key, val in self.state.items():
            if key == "trees":
                st[key] = [t.to_dict() for t in val]
            elif isinstance(val, np.ndarray):
                st[key] = val.tolist()
            else:
                st[key] = val
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, **self.spec.to_dict(),
                "feature_names": list(self.feature_names), "mean": self.mean.tolist(),
                "scale": self.scale.tolist(), "state": st}

    @classmethod
    def from_dict(cls, d) -> "TrainedModel":
        if d.get("format") != MODEL_FORMAT:
            raise DataError("not a %s document" % MODEL_FORMAT)
        if d.get("version") != MODEL_VERSION:
            raise DataError("unsupported model version %r" % d.get("version"))
        spec = ClassifierSpec(d["family"], d["params"])
        st = {}
        for key, val in d["state"].items():
            if key == "trees":
                st[key] = [Tree.from_dict(t) for t in val]
            elif key == "bias":
                st[key] = float(val)
            elif key == "y":
                st[key] = np.asarray(val, dtype=np.int64)
            else:
                st[key] = np.asarray(val, dtype=np.float64)
        return cls(spec, tuple(d["feature_names"]), np.asarray(d["mean"]), np.asarray(d["scale"]), st)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "TrainedModel":
        path = Path(path)
        if not path.is_file():
            raise DataError("model file not found: %s" % path)
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except (KeyError, json.JSONDecodeError) as exc:
            raise DataError("%s: malformed model file (%s)" % (path, exc)) from None


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise DataError("X must be (n, d) with n matching len(y)")
    if not np.all(np.isfinite(X)):
        raise DataError("training features contain NaN or infinite values")
    if not set(np.unique(y)) <= {GENUINE, IMPOSTER}:
        raise DataError("labels must be 0 (genuine) or 1 (imposter)")
    if len(np.unique(y)) < 2:
        raise DataError("training data holds a single class")
    return X, y


def train(spec: ClassifierSpec, X, y, feature_names=None) -> TrainedModel:
    """Fit ``spec`` on raw features ``X`` and labels ``y`` (0 genuine, 1 imposter)."""
    X, y = _check_xy(X, y)
    names = tuple(feature_names) if feature_names is not None else tuple("f%d" % i for i in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise DataError("%d feature names for %d columns" % (len(names), X.shape[1]))
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    p = spec.params
    if spec.family == "knn":
        state = {"X": Z, "y": y}
    elif spec.family == "gaussian_nb":
        eps = p["var_smoothing"] * float(Z.var(axis=0).max())
        theta = np.stack([Z[y == c].mean(axis=0) for c in (GENUINE, IMPOSTER)])
        var = np.stack([Z[y == c].var(axis=0) for c in (GENUINE, IMPOSTER)]) + eps
        var[var <= 0] = np.finfo(float).tiny
        prior = np.array([np.mean(y == GENUINE), np.mean(y == IMPOSTER)])
        state = {"theta": theta, "var": var, "log_prior": np.log(prior)}
    elif spec.family == "random_forest":
        trees, imp = fit_forest(Z, y, p["n_estimators"], p["max_depth"], p["seed"])
        state = {"trees": trees, "importances": imp}
    else:
        ys = np.where(y == GENUINE, 1.0, -1.0)
        K = kernel_matrix(Z, Z, p["kernel"], p["degree"], p["gamma"])
        alpha, bias, n_iter, converged = kernels.smo_solve(K, ys, p["C"], p["tol"], p["max_passes"])
        if not converged:
            log.warning("SMO stopped after %d iterations without reaching tol=%g", n_iter, p["tol"])
        sv = alpha > 0
        state = {"support": Z[sv], "coef": alpha[sv] * ys[sv], "bias": float(bias)}
    return TrainedModel(spec, names, mean, scale, state)


def predict(model: TrainedModel, x) -> Prediction:
    """Predict one instance (a FeatureVector, or a raw vector in model order)."""
    if hasattr(x, "names"):
        x = x.take(model.feature_names)
    return Prediction.from_score(model.scores(np.asarray(x, dtype=np.float64))[0])


# ------------------------------------------------------------- grid search

def expand_grid(grid) -> list[dict]:
    """A dict of value lists becomes its Cartesian product (in key order); a
    list of dicts is taken as-is."""
    if isinstance(grid, dict):
        keys = list(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid]


def stratified_folds(y, folds: int, seed: int = 0) -> list[np.ndarray]:
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    assign = np.empty(y.shape[0], dtype=np.int64)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.shape[0] < folds:
            raise ConfigError("%d folds exceed the %d instances of class %d" % (folds, idx.shape[0], c))
        idx = rng.permutation(idx)
        assign[idx] = np.arange(idx.shape[0]) % folds
    return [np.flatnonzero(assign == f) for f in range(folds)]


def f1_genuine(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    tp = np.sum((y_pred == GENUINE) & (y_true == GENUINE))
    fp = np.sum((y_pred == GENUINE) & (y_true == IMPOSTER))
    fn = np.sum((y_pred == IMPOSTER) & (y_true == GENUINE))
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def grid_search(family: str, grids, X, y, folds: int = 3, seed: int = 0,
                base_params: dict | None = None) -> ClassifierSpec:
    """Return the grid point with the best mean stratified-fold F1.

    Ties keep the earliest point in grid order.
    """
    grids = DEFAULT_GRIDS[family] if grids is None else grids
    points = expand_grid(grids)
    if not points:
        raise ConfigError("empty parameter grid")
    if folds < 2:
        raise ConfigError("grid search needs at least 2 folds")
    X, y = _check_xy(X, y)
    parts = stratified_folds(y, folds, seed)
    best, best_f1 = None, -1.0
    for point in points:
        spec = ClassifierSpec(family, {**(base_params or {}), **point})
        total = 0.0
        for test in parts:
            trn = np.setdiff1d(np.arange(y.shape[0]), test)
            model = train(spec, X[trn], y[trn])
            total += f1_genuine(y[test], model.predict_many(X[test])[0])
        score = total / folds
        if score > best_f1:
            best, best_f1 = spec, score
    return best
