"""Nuisance learners and their fit/predict lifecycle on designated rows."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..core import RngHandle, TaskDataset
from ..errors import DimensionMismatch, EmptyData, NoControlRows, NoTreatedRows
from . import _trees

KINDS = ("gbt_regressor", "gbt_classifier", "ridge", "constant")
MODELS = ("plm", "ate", "did")


@dataclass(frozen=True)
class NuisanceLearnerSpec:
    kind: str = "gbt_regressor"
    trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 20
    l2_penalty: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.trees < 1:
            raise ValueError("trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")


@dataclass(frozen=True)
class NuisanceFit:
    """A fitted predictor ``x -> real``.

    ``train_rows`` records which rows of the owning task were used, so fold
    discipline can be audited after the fact.
    """

    kind: str
    n_features: int
    params: Any
    in_sample: np.ndarray
    clip_bounds: tuple | None = None
    train_rows: np.ndarray | None = field(default=None, compare=False)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise EmptyData("no rows to fit")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows in X but {y.shape[0]} targets")
    return X, y


def _raw(fit: NuisanceFit, X):
    if fit.kind == "constant":
        return np.full(X.shape[0], fit.params)
    if fit.kind == "ridge":
        mu_x, mu_y, beta = fit.params
        return mu_y + (X - mu_x) @ beta
    base, arrays = fit.params
    return _trees.predict_raw(X, base, arrays)


def predict(fit: NuisanceFit, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != fit.n_features:
        raise DimensionMismatch(f"model trained on {fit.n_features} features, got {X.shape[1]}")
    out = _raw(fit, X)
    if fit.kind == "gbt_classifier":
        out = 1.0 / (1.0 + np.exp(-out))
    if fit.clip_bounds is not None:
        out = np.clip(out, *fit.clip_bounds)
    return out


def fit_regressor(spec: NuisanceLearnerSpec, X, y, rng: RngHandle | None = None) -> NuisanceFit:
    """Least-squares regression of ``y`` on ``X`` (boosting, ridge or mean).

    The exact-greedy learner is deterministic, so ``rng`` is accepted for
    interface uniformity only.
    """
    X, y = _check_xy(X, y)
    p = X.shape[1]
    kind = "gbt_regressor" if spec.kind == "gbt_classifier" else spec.kind
    if kind == "constant":
        mu = float(np.mean(y))
        return NuisanceFit("constant", p, mu, np.full(len(y), mu))
    if kind == "ridge":
        mu_x = X.mean(axis=0)
        mu_y = float(y.mean())
        Xc = X - mu_x
        beta = np.linalg.solve(Xc.T @ Xc + spec.l2_penalty * np.eye(p), Xc.T @ (y - mu_y))
        fit = NuisanceFit("ridge", p, (mu_x, mu_y, beta), np.empty(0))
        return NuisanceFit("ridge", p, fit.params, _raw(fit, X))
    if np.ptp(y) == 0:
        warnings.warn("constant regression target; boosted fit reduces to its mean", stacklevel=2)
    base, arrays, F = _trees.boost(
        X, y, _trees.LOSS_SQUARED, spec.trees, spec.max_depth, spec.min_leaf, spec.learning_rate
    )
    return NuisanceFit("gbt_regressor", p, (base, arrays), F)


def fit_classifier(
    spec: NuisanceLearnerSpec, X, d, clip=(0.05, 0.95), rng: RngHandle | None = None
) -> NuisanceFit:
    """Logistic-loss boosting for P(d = 1 | X); predictions clipped to ``clip``."""
    X, d = _check_xy(X, d)
    lo, hi = clip
    if not 0 < lo < hi < 1:
        raise ValueError("clip bounds must satisfy 0 < lo < hi < 1")
    if not np.all((d == 0) | (d == 1)):
        raise ValueError("classifier targets must be 0/1")
    p = X.shape[1]
    freq = float(np.mean(d))
    if freq in (0.0, 1.0) or spec.kind == "constant":
        if freq in (0.0, 1.0):
            warnings.warn("single-class target; predicting the clipped class frequency", stacklevel=2)
        c = float(np.clip(freq, lo, hi))
        return NuisanceFit("constant", p, c, np.full(len(d), c), clip_bounds=(lo, hi))
    if spec.kind == "ridge":
        # linear probability model, clipped
        fit = fit_regressor(spec, X, d)
        return NuisanceFit("ridge", p, fit.params, np.clip(fit.in_sample, lo, hi), clip_bounds=(lo, hi))
    base, arrays, F = _trees.boost(
        X, d, _trees.LOSS_LOGISTIC, spec.trees, spec.max_depth, spec.min_leaf, spec.learning_rate
    )
    probs = np.clip(1.0 / (1.0 + np.exp(-F)), lo, hi)
    return NuisanceFit("gbt_classifier", p, (base, arrays), probs, clip_bounds=(lo, hi))


def _with_rows(fit: NuisanceFit, rows) -> NuisanceFit:
    return NuisanceFit(fit.kind, fit.n_features, fit.params, fit.in_sample, fit.clip_bounds, rows)


def fit_task_nuisances(
    data: TaskDataset,
    model: str,
    spec: NuisanceLearnerSpec,
    fold=None,
    rng: RngHandle | None = None,
    clip=(0.05, 0.95),
    classifier: NuisanceLearnerSpec | None = None,
) -> dict[str, NuisanceFit]:
    """Fit the nuisance set of ``model`` using only the rows of ``fold``.

    ``fold`` follows :meth:`TaskDataset.rows` (``None`` = all rows). The
    returned names are ``{h, m}`` for plm, ``{pi, m1, m0}`` for ate and
    ``{pi, m}`` for did, where did's ``m`` regresses the outcome change on
    ``X`` among controls.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    rows = data.rows(fold)
    X = data.covariates[rows]
    reg = spec if spec.kind != "gbt_classifier" else NuisanceLearnerSpec(
        "gbt_regressor", spec.trees, spec.max_depth, spec.learning_rate, spec.min_leaf
    )
    cls = classifier or (reg if reg.kind != "gbt_regressor" else NuisanceLearnerSpec(
        "gbt_classifier", reg.trees, reg.max_depth, reg.learning_rate, reg.min_leaf
    ))

    if model == "plm":
        return {
            "h": _with_rows(fit_regressor(reg, X, data.treatment[rows], rng), rows),
            "m": _with_rows(fit_regressor(reg, X, data.outcome[rows], rng), rows),
        }

    D = data.treatment[rows]
    treated, control = D == 1, D == 0
    if model == "ate":
        y = data.outcome[rows]
        if not control.any():
            raise NoControlRows(f"task {data.task_id}: no D=0 rows in the nuisance fold")
        if not treated.any():
            raise NoTreatedRows(f"task {data.task_id}: no D=1 rows in the nuisance fold")
        return {
            "pi": _with_rows(fit_classifier(cls, X, D, clip, rng), rows),
            "m1": _with_rows(fit_regressor(reg, X[treated], y[treated], rng), rows[treated]),
            "m0": _with_rows(fit_regressor(reg, X[control], y[control], rng), rows[control]),
        }

    dy = data.delta_outcome[rows]
    if not control.any():
        raise NoControlRows(f"task {data.task_id}: no D=0 rows in the nuisance fold")
    return {
        "pi": _with_rows(fit_classifier(cls, X, D, clip, rng), rows),
        "m": _with_rows(fit_regressor(reg, X[control], dy[control], rng), rows[control]),
    }
