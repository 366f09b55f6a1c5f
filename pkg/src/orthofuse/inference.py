"""Cluster-pooled sandwich variances and Wald intervals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import solve_spd
from .errors import EmptyCluster, NotPositiveDefinite, SingularHessian, ZeroSE

__all__ = ["ClusterInference", "normal_quantile", "sandwich_inference", "standardize_estimates"]


@dataclass(frozen=True, eq=False)
class ClusterInference:
    cluster_id: int
    members: tuple
    N_k: int
    estimate: np.ndarray
    Psi_hat: np.ndarray
    Omega_hat: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    level: float

    @property
    def covariance(self) -> np.ndarray:
        """Estimated covariance of ``estimate``."""
        Pinv = _inverse(self.Psi_hat)
        return Pinv @ self.Omega_hat @ Pinv / self.N_k


def normal_quantile(level: float) -> float:
    """Two-sided critical value ``z`` with ``P(|Z| <= z) = level``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(norm.ppf(1 - (1 - level) / 2))


def _inverse(M):
    d = M.shape[0]
    return np.column_stack([solve_spd(M, e) for e in np.eye(d)])


def _obs_terms(loss, theta):
    try:
        return loss.obs_gradients(theta), loss.obs_hessians(theta)
    except AttributeError:
        raise TypeError(f"{type(loss).__name__} has no per-observation scores") from None


def sandwich_inference(partition, losses, theta_hat, level: float = 0.95) -> list[ClusterInference]:
    """Per-cluster estimate, standard errors and Wald intervals.

    Scores and Hessians of every observation in the cluster are evaluated at
    the cluster's estimate and pooled; scores are not re-centered.
    """
    z = normal_quantile(level)
    theta = np.asarray(theta_hat, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, None]
    out = []
    for k, members in enumerate(partition):
        members = tuple(int(j) for j in members)
        if not members:
            raise EmptyCluster(f"cluster {k} has no members")
        est = theta[list(members)].mean(axis=0)
        d = est.size
        N = 0
        H = np.zeros((d, d))
        S = np.zeros((d, d))
        for j in members:
            g, h = _obs_terms(losses[j], est)
            g = g.reshape(len(g), d)
            N += int(losses[j].n_eff)
            H += h.reshape(-1, d, d).sum(axis=0)
            S += g.T @ g
        Psi = 0.5 * (H + H.T) / N
        Omega = 0.5 * (S + S.T) / N
        try:
            Pinv = _inverse(Psi)
        except NotPositiveDefinite as exc:
            raise SingularHessian(f"cluster {k} {members}: {exc}") from None
        V = Pinv @ Omega @ Pinv / N
        se = np.sqrt(np.clip(np.diag(V), 0.0, None))
        out.append(
            ClusterInference(k, members, N, est, Psi, Omega, se, est - z * se, est + z * se, level)
        )
    return out


def standardize_estimates(theta_hat, theta_true, se) -> np.ndarray:
    """``(theta_hat - theta_true) / se`` elementwise."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    se = np.asarray(se, dtype=float)
    if np.any(se <= 0):
        raise ZeroSE("standard errors must be positive")
    return (theta_hat - theta_true) / se
