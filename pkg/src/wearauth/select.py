"""Feature selectors: correlation filtering, forest-importance selection and
univariate ANOVA K-best."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .learn import ClassifierSpec, train

METHODS = ("correlation", "from_model", "k_best")


@dataclass(frozen=True)
class SelectionReport:
    method: str
    kept: tuple
    scores: dict
    params: dict = field(default_factory=dict)

    @property
    def indices(self) -> list[int]:
        names = list(self.scores)
        return [names.index(k) for k in self.kept]

    def to_dict(self) -> dict:
        return {"method": self.method, "params": self.params, "kept": list(self.kept),
                "scores": {k: float(v) for k, v in self.scores.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)


def _prepare(X, names):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise DataError("feature matrix is empty")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite values")
    names = tuple(names) if names is not None else tuple("f%d" % i for i in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise DataError("%d names for %d columns" % (len(names), X.shape[1]))
    return X, names


def _binary(y):
    y = np.asarray(y).astype(np.int64)
    if len(np.unique(y)) != 2:
        raise DataError("selection needs labels from exactly two classes")
    return y


def correlation_filter(X, threshold: float = 0.9, names=None) -> SelectionReport:
    """Greedy left-to-right filter of mutually correlated features.

    A column is kept iff its absolute Pearson correlation with every
    already-kept column is below ``threshold``. Constant columns are dropped
    before the pass. A column's score is its largest ``|r|`` against the
    columns kept before it.
    """
    X, names = _prepare(X, names)
    if X.shape[0] < 2:
        raise DataError("correlation filter needs at least 2 instances")
    if not 0 < threshold <= 1:
        raise ConfigError("threshold must be in (0, 1]")
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    constant = norms == 0
    unit = np.where(constant, 0.0, centered / np.where(constant, 1.0, norms))
    kept, scores = [], {}
    for j, name in enumerate(names):
        if constant[j]:
            scores[name] = 0.0
            continue
        r = float(np.max(np.abs(unit[:, kept].T @ unit[:, j]))) if kept else 0.0
        r = min(r, 1.0)
        scores[name] = r
        if r < threshold:
            kept.append(j)
    return SelectionReport("correlation", tuple(names[j] for j in kept), scores,
                           {"threshold": threshold, "dropped_constant": [n for n, c in zip(names, constant) if c]})


def prefix_by_importance(importances, p: float) -> list[int]:
    """Indices of the shortest importance-descending prefix whose sum reaches ``p``.

    Ties are broken by column order.
    """
    imp = np.asarray(importances, dtype=np.float64)
    order = np.argsort(-imp, kind="stable")
    cum = np.cumsum(imp[order])
    reach = np.flatnonzero(cum >= p - 1e-12)
    stop = int(reach[0]) + 1 if reach.size else order.shape[0]
    return [int(i) for i in order[:stop]]


def select_from_model(X, y, p: float = 0.9, names=None, n_estimators: int = 100, seed: int = 0,
                      max_depth=None) -> SelectionReport:
    """Keep the most important features of a random forest until they
    explain a fraction ``p`` of the total impurity decrease."""
    X, names = _prepare(X, names)
    y = _binary(y)
    if not 0 < p <= 1:
        raise ConfigError("p must be in (0, 1]")
    spec = ClassifierSpec("random_forest", {"n_estimators": n_estimators, "seed": seed, "max_depth": max_depth})
    imp = train(spec, X, y, names).feature_importances
    keep = prefix_by_importance(imp, p)
    return SelectionReport("from_model", tuple(names[i] for i in keep), dict(zip(names, imp.tolist())),
                           {"p": p, "n_estimators": n_estimators, "seed": seed})


def f_scores(X, y) -> np.ndarray:
    """One-way ANOVA F statistic of each column between the label groups.

    Constant columns score 0; columns with zero within-group spread but
    distinct group means score the largest finite float.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    groups = [X[y == c] for c in np.unique(y)]
    n, g = X.shape[0], len(groups)
    grand = X.mean(axis=0)
    ssb = sum(G.shape[0] * (G.mean(axis=0) - grand) ** 2 for G in groups)
    ssw = sum(((G - G.mean(axis=0)) ** 2).sum(axis=0) for G in groups)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ssb / (g - 1)) / (ssw / (n - g))
    f = np.where(np.isnan(f), 0.0, f)
    return np.where(np.isinf(f), np.finfo(float).max, f)


def select_k_best(X, y, k: int = 10, names=None) -> SelectionReport:
    """Top-``k`` features by ANOVA F score, highest first (ties by column order)."""
    X, names = _prepare(X, names)
    y = _binary(y)
    if not 0 < k <= X.shape[1]:
        raise ConfigError("k=%d must be in [1, %d]" % (k, X.shape[1]))
    if X.shape[0] < 3:
        raise DataError("k-best needs at least 3 instances")
    f = f_scores(X, y)
    order = np.argsort(-f, kind="stable")[:k]
    return SelectionReport("k_best", tuple(names[i] for i in order), dict(zip(names, f.tolist())), {"k": k})


def run_selector(method: str, X, y, names=None, **params) -> SelectionReport:
    if method == "correlation":
        return correlation_filter(X, params.get("threshold", 0.9), names)
    if method == "from_model":
        return select_from_model(X, y, params.get("p", 0.9), names,
                                 params.get("n_estimators", 100), params.get("seed", 0))
    if method == "k_best":
        X = np.asarray(X)
        return select_k_best(X, y, min(params.get("k", 10), X.shape[1]), names)
    raise ConfigError("unknown selector %r (choose from %s)" % (method, ", ".join(METHODS)))
