"""Synthetic clustered multitask data for the three causal models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..core import RngHandle, TaskDataset
from ..errors import EmptyClusterRetry

__all__ = [
    "DgpConfig",
    "SimTruth",
    "TruePredictor",
    "antithetic_plm",
    "assign_clusters",
    "centroids",
    "generate_task",
    "generate_tasks",
    "true_nuisances",
]

MAX_CLUSTER_DRAWS = 100


@dataclass(frozen=True)
class DgpConfig:
    """Simulation design.

    Task ``j`` (0-based) has ``n0 + n_step * (j + 1)`` rows and
    ``p0 + p_step * (j + 1)`` covariates.
    """

    model: str = "plm"
    m: int = 20
    K: int = 3
    delta: float = 1 / 3
    n0: int = 400
    n_step: int = 10
    p0: int = 5
    p_step: int = 1
    xi_max: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("plm", "ate", "did"):
            raise ValueError(f"unknown model {self.model!r}")
        if not 1 <= self.K <= self.m:
            raise ValueError("need 1 <= K <= m")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.xi_max < 0:
            raise ValueError("xi_max must be non-negative")
        if self.n0 < 0 or self.n_step < 0 or self.p_step < 0:
            raise ValueError("size rules must be non-negative")
        if self.model != "plm" and self.p(0) < 5:
            raise ValueError("the propensity model uses the first five covariates")
        if self.p(0) < 1:
            raise ValueError("every task needs at least one covariate")

    def n(self, j: int) -> int:
        return self.n0 + self.n_step * (j + 1)

    def p(self, j: int) -> int:
        return self.p0 + self.p_step * (j + 1)


def centroids(K: int, delta: float) -> np.ndarray:
    """Equally spaced centroids ``k*delta - (K+1)*delta/2``, k = 1..K."""
    k = np.arange(1, K + 1)
    return k * delta - (K + 1) * delta / 2


@dataclass(frozen=True, eq=False)
class SimTruth:
    cluster_of: np.ndarray
    beta_star: np.ndarray
    theta_star: np.ndarray

    @property
    def partition(self) -> list:
        groups = {}
        for j, k in enumerate(self.cluster_of):
            groups.setdefault(int(k), []).append(j)
        return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def assign_clusters(cfg: DgpConfig, rng: RngHandle) -> SimTruth:
    """Uniform cluster labels (redrawn until no cluster is empty) and task targets."""
    gen = rng.generator()
    for _ in range(MAX_CLUSTER_DRAWS):
        lab = gen.integers(0, cfg.K, size=cfg.m)
        if np.unique(lab).size == cfg.K:
            break
    else:
        raise EmptyClusterRetry(f"no draw filled all {cfg.K} clusters in {MAX_CLUSTER_DRAWS} attempts")
    beta = centroids(cfg.K, cfg.delta)
    theta = beta[lab].astype(float)
    if cfg.xi_max > 0:
        # uniform on the interval [-xi, xi], the one-dimensional ball
        theta = theta + gen.uniform(-cfg.xi_max, cfg.xi_max, size=cfg.m)
    return SimTruth(lab, beta, theta)


def _signed_sigmoid_sum(X, ratio):
    r = np.arange(1, X.shape[1] + 1)
    return expit(X) @ (ratio**r)


def h_fn(X):
    return 0.2 * np.tanh(X.sum(axis=1))


def g_fn(X):
    return _signed_sigmoid_sum(X, -0.8)


def pi_fn(X, clip=(0.05, 0.95)):
    return np.clip(expit(X[:, 3] * X[:, 4] - X[:, 0] * X[:, 1]), *clip)


def mu0_fn(X):
    return _signed_sigmoid_sum(X, 0.7)


def mu1_fn(X):
    return _signed_sigmoid_sum(X, -0.7)


def generate_task(cfg: DgpConfig, truth: SimTruth, j: int, rng: RngHandle) -> TaskDataset:
    if not 0 <= j < cfg.m:
        raise IndexError(f"task {j} outside 0..{cfg.m - 1}")
    gen = rng.generator()
    n, p = cfg.n(j), cfg.p(j)
    theta = float(truth.theta_star[j])
    X = gen.standard_normal((n, p))
    if cfg.model == "plm":
        T = h_fn(X) + gen.standard_normal(n)
        Y = theta * T + g_fn(X) + gen.standard_normal(n)
        return TaskDataset(j, Y, T, X)
    D = (gen.uniform(size=n) < pi_fn(X)).astype(float)
    if cfg.model == "ate":
        Y = theta * D + g_fn(X) + gen.standard_normal(n)
        return TaskDataset(j, Y, D, X)
    Y0 = mu0_fn(X) + gen.standard_normal(n)
    Y1 = theta * D + mu1_fn(X) + gen.standard_normal(n)
    return TaskDataset(j, np.column_stack([Y0, Y1]), D, X)


def generate_tasks(cfg: DgpConfig, truth: SimTruth, handles) -> list[TaskDataset]:
    return [generate_task(cfg, truth, j, h) for j, h in enumerate(handles)]


@dataclass(frozen=True)
class TruePredictor:
    """Wraps a known regression function in the fitted-nuisance interface."""

    fn: object

    def predict(self, X):
        return self.fn(np.atleast_2d(np.asarray(X, dtype=float)))


def true_nuisances(model: str, theta: float) -> dict:
    """Population nuisance functions of one task, keyed as the learners key them.

    PLM additionally exposes ``g`` for the plug-in (non-orthogonal) loss.
    """
    if model == "plm":
        return {
            "h": TruePredictor(h_fn),
            "m": TruePredictor(lambda X: theta * h_fn(X) + g_fn(X)),
            "g": TruePredictor(g_fn),
        }
    if model == "ate":
        return {
            "pi": TruePredictor(pi_fn),
            "m1": TruePredictor(lambda X: theta + g_fn(X)),
            "m0": TruePredictor(g_fn),
        }
    if model == "did":
        return {"pi": TruePredictor(pi_fn), "m": TruePredictor(lambda X: mu1_fn(X) - mu0_fn(X))}
    raise ValueError(f"unknown model {model!r}")


def antithetic_plm(data: TaskDataset, theta: float) -> TaskDataset:
    """Same covariates with both noises sign-flipped about their true means."""
    X = data.covariates
    h = h_fn(X)
    T = 2 * h - data.treatment
    m = theta * h + g_fn(X)
    Y = 2 * m - data.outcome
    return TaskDataset(data.task_id, Y, T, X, data.folds)
