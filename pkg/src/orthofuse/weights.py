"""Pilot estimates and pairwise fusion penalties.

Adaptive weights are ``w = c_w * dist**-gamma`` on pilot distances, capped at
``w_cap``; any weight at or below ``tau`` is replaced by the floor ``eps_n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngHandle, TaskDataset
from .losses import build_loss
from .nuisance import NuisanceLearnerSpec, fit_task_nuisances

__all__ = [
    "FusionHyperparams",
    "PenaltyMatrix",
    "compute_weights",
    "fit_pilot",
    "uniform_penalty",
]

ADAPTIVE, FLOOR, UNIFORM = "adaptive", "floor", "uniform"


@dataclass(frozen=True)
class FusionHyperparams:
    c_w: float = 0.1
    gamma: float = 2.0
    tau: float = 10.0
    eps_n: float = 1e-12
    w_cap: float = 1e12

    def __post_init__(self):
        if self.c_w <= 0 or self.gamma <= 0:
            raise ValueError("c_w and gamma must be positive")
        if self.tau < 0 or self.eps_n < 0:
            raise ValueError("tau and eps_n must be non-negative")
        if self.eps_n > self.tau:
            raise ValueError("eps_n must not exceed tau")
        if self.w_cap < self.tau:
            raise ValueError("w_cap must be at least tau")


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    """Symmetric pairwise penalties with per-entry provenance."""

    values: np.ndarray
    provenance: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def edges(self):
        """Upper-triangle pairs ``(E, 2)`` and their penalties ``(E,)``."""
        j, k = np.triu_indices(self.m, 1)
        return np.column_stack([j, k]), self.values[j, k]

    def rows(self):
        """``(j, k, lambda, provenance)`` for every unordered pair."""
        pairs, lam = self.edges()
        return [(int(j), int(k), float(v), str(self.provenance[j, k])) for (j, k), v in zip(pairs, lam)]


def fit_pilot(
    data: TaskDataset,
    model: str,
    learner: NuisanceLearnerSpec,
    rng: RngHandle | None = None,
    clip=(0.05, 0.95),
) -> np.ndarray:
    """Unpenalized task-local estimate from nuisances fit on every row.

    The model's own loss is evaluated on the same (full) data; orthogonality
    is not needed here, only consistency.
    """
    if data.n < 4:
        raise ValueError(f"task {data.task_id}: pilot needs at least 4 observations")
    fits = fit_task_nuisances(data, model, learner, None, rng, clip)
    return build_loss(model, data, fits).minimizer()


def compute_weights(pilots, hp: FusionHyperparams = FusionHyperparams()) -> PenaltyMatrix:
    P = np.asarray(pilots, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    m = P.shape[0]
    if m < 2:
        raise ValueError("need at least two tasks")
    dist = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    with np.errstate(divide="ignore", over="ignore"):
        w = np.where(dist > 0, hp.c_w * dist ** (-hp.gamma), np.inf)
    w = np.minimum(w, hp.w_cap)
    strong = w > hp.tau
    lam = np.where(strong, w, hp.eps_n)
    np.fill_diagonal(lam, 0.0)
    prov = np.where(strong, ADAPTIVE, FLOOR).astype(object)
    np.fill_diagonal(prov, "")
    return PenaltyMatrix(lam, prov)


def uniform_penalty(m: int, lam: float) -> PenaltyMatrix:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    vals = np.full((m, m), float(lam))
    np.fill_diagonal(vals, 0.0)
    prov = np.full((m, m), UNIFORM, dtype=object)
    np.fill_diagonal(prov, "")
    return PenaltyMatrix(vals, prov)
