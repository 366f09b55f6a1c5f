"""ADMM solver for the pairwise-fused objective.

Minimizes ``sum_j f_j(t_j) + sum_{j<k} lam_jk |t_j - t_k|_2`` by splitting
each edge difference into ``z_e = t_j - t_k``. Edges whose ``z_e`` lands
exactly on zero (group soft-threshold) mark fused task pairs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import solve_spd
from .errors import ConvergenceWarning, NotPositiveDefinite, SingularSystem
from .losses import QuadraticLoss
from .weights import PenaltyMatrix

__all__ = [
    "FusionSolution",
    "SolverConfig",
    "consensus_snap",
    "extract_partition",
    "fused_objective",
    "group_soft_threshold",
    "refit_clusters",
    "solve_fused",
]


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    tol_abs: float = 1e-8
    tol_rel: float = 1e-6
    max_iter: int = 10000
    residual_balance: bool = True
    balance_factor: float = 2.0
    balance_ratio: float = 10.0
    max_balance: int = 30
    inner_newton_tol: float = 1e-10
    fuse_tol: float = 1e-5
    refit: bool = False

    def __post_init__(self):
        for name in ("rho", "tol_abs", "tol_rel", "inner_newton_tol", "fuse_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 1 or self.balance_factor <= 1 or self.balance_ratio <= 1:
            raise ValueError("invalid iteration / balancing settings")


@dataclass
class FusionSolution:
    theta_hat: np.ndarray
    edges: np.ndarray
    z: np.ndarray
    fused: np.ndarray
    partition: list
    iterations: int
    converged: bool
    objective_value: float
    history: list = field(default_factory=list, repr=False)
    refit: np.ndarray | None = None

    @property
    def labels(self) -> np.ndarray:
        lab = np.empty(len(self.theta_hat), dtype=np.int64)
        for k, members in enumerate(self.partition):
            lab[list(members)] = k
        return lab


def group_soft_threshold(v, kappa: float) -> np.ndarray:
    """Proximal map of ``kappa * |.|_2``; rows of a 2-D input are separate groups."""
    v = np.asarray(v, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if v.ndim == 1:
        nrm = np.linalg.norm(v)
        return np.zeros_like(v) if nrm <= kappa else (1 - kappa / nrm) * v
    nrm = np.linalg.norm(v, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > kappa, 1 - kappa / nrm, 0.0)
    return scale[:, None] * v


def fused_objective(losses, penalties, theta) -> float:
    theta = np.asarray(theta, dtype=float).reshape(len(losses), -1)
    pairs, lam = _edges(penalties, len(losses))
    fit = sum(f.value(t) for f, t in zip(losses, theta))
    if len(pairs) == 0:
        return float(fit)
    diff = np.linalg.norm(theta[pairs[:, 0]] - theta[pairs[:, 1]], axis=1)
    return float(fit + lam @ diff)


def _edges(penalties, m):
    if isinstance(penalties, PenaltyMatrix):
        return penalties.edges()
    P = np.asarray(penalties, dtype=float)
    if P.ndim == 0:
        P = np.full((m, m), float(P))
    j, k = np.triu_indices(m, 1)
    return np.column_stack([j, k]), P[j, k]


class _Graph:
    def __init__(self, pairs, m):
        self.pairs = pairs
        self.m = m
        self.src = pairs[:, 0]
        self.dst = pairs[:, 1]
        n_e = len(pairs)
        rows = np.repeat(np.arange(n_e), 2)
        cols = pairs.ravel()
        vals = np.tile([1.0, -1.0], n_e)
        self.D = csr_matrix((vals, (rows, cols)), shape=(n_e, m))
        self.Dt = self.D.T.tocsr()
        self.laplacian = (self.Dt @ self.D).toarray()
        self.deg = np.diag(self.laplacian).astype(np.int64)

    def diff(self, theta):
        return self.D @ theta

    def adjoint(self, y):
        return self.Dt @ y


class _QuadraticStep:
    """Exact theta-update: (blockdiag(2A_j) + rho L (x) I) theta = 2b + rho D'(z - u)."""

    def __init__(self, losses, graph, d):
        self.m = len(losses)
        self.d = d
        self.graph = graph
        H = np.zeros((self.m * d, self.m * d))
        for j, f in enumerate(losses):
            H[j * d:(j + 1) * d, j * d:(j + 1) * d] = 2 * f.A
        self.H = H
        self.rhs0 = np.concatenate([2 * f.b for f in losses])
        self.rho = None

    def factor(self, rho):
        K = self.H + rho * np.kron(self.graph.laplacian, np.eye(self.d))
        try:
            self.cho = scipy.linalg.cho_factor(K)
        except np.linalg.LinAlgError:
            raise SingularSystem("fused system is singular; a loss lacks curvature") from None
        self.rho = rho

    def __call__(self, theta, c, rho):
        if rho != self.rho:
            self.factor(rho)
        rhs = self.rhs0 + rho * self.graph.adjoint(c).ravel()
        return scipy.linalg.cho_solve(self.cho, rhs).reshape(self.m, self.d)


class _NewtonStep:
    """Block Gauss-Seidel sweeps with damped Newton steps per task."""

    def __init__(self, losses, graph, d, tol, max_sweeps=200):
        self.losses = losses
        self.graph = graph
        self.d = d
        self.tol = tol
        self.max_sweeps = max_sweeps

    def _block(self, j, theta, c, rho):
        g = self.graph
        s = np.zeros(self.d)
        out = g.src == j
        inc = g.dst == j
        s += (theta[g.dst[out]] + c[out]).sum(axis=0)
        s += (theta[g.src[inc]] - c[inc]).sum(axis=0)
        return s, g.deg[j]

    def _local(self, j, t, s, deg, rho):
        f = self.losses[j]
        val = f.value(t) + 0.5 * rho * (deg * t @ t - 2 * s @ t)
        grad = f.gradient(t) + rho * (deg * t - s)
        hess = f.hessian(t) + rho * deg * np.eye(self.d)
        return val, grad, hess

    def __call__(self, theta, c, rho):
        theta = theta.copy()
        for _ in range(self.max_sweeps):
            worst = 0.0
            for j in range(len(self.losses)):
                s, deg = self._block(j, theta, c, rho)
                t = theta[j]
                for _ in range(50):
                    val, grad, hess = self._local(j, t, s, deg, rho)
                    if np.linalg.norm(grad) <= self.tol:
                        break
                    try:
                        step = solve_spd(hess, grad)
                    except NotPositiveDefinite:
                        step = grad / max(np.abs(hess).max(), 1.0)
                    a = 1.0
                    while a > 1e-12:
                        cand = t - a * step
                        if self._local(j, cand, s, deg, rho)[0] <= val - 1e-4 * a * grad @ step:
                            break
                        a *= 0.5
                    t = t - a * step
                worst = max(worst, np.linalg.norm(theta[j] - t))
                theta[j] = t
            if worst <= self.tol:
                break
        return theta


def _initial_theta(losses, d):
    out = np.zeros((len(losses), d))
    for j, f in enumerate(losses):
        if isinstance(f, QuadraticLoss):
            try:
                out[j] = solve_spd(f.A, f.b)
            except NotPositiveDefinite:
                pass
    return out


def solve_fused(losses, penalties, cfg: SolverConfig = SolverConfig()) -> FusionSolution:
    """Solve the fused problem; see module docstring."""
    losses = list(losses)
    m = len(losses)
    if m < 1:
        raise ValueError("need at least one task")
    d = losses[0].dim
    pairs, lam = _edges(penalties, m)
    if np.any(lam < 0):
        raise ValueError("penalties must be non-negative")
    graph = _Graph(pairs, m)
    quadratic = all(isinstance(f, QuadraticLoss) for f in losses)
    step = _QuadraticStep(losses, graph, d) if quadratic else _NewtonStep(losses, graph, d, cfg.inner_newton_tol)

    theta = _initial_theta(losses, d)
    if m == 1:
        if not quadratic:
            theta = step(theta, np.zeros((0, d)), cfg.rho)
        return _finish(losses, pairs, lam, theta, np.zeros((0, d)), 0, True, [], cfg)

    rho = cfg.rho
    z = graph.diff(theta)
    u = np.zeros_like(z)
    n_edges = len(pairs)
    sq = np.sqrt(n_edges * d)
    evaluator = _Stacked(losses) if quadratic else losses
    best_obj, best = np.inf, (theta, z)
    history = []
    converged = False
    n_balance = 0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        theta = step(theta, z - u, rho)
        Dt = graph.diff(theta)
        z_old = z
        z = group_soft_threshold(Dt + u, lam / rho)
        u = u + Dt - z
        r = np.linalg.norm(Dt - z)
        s = rho * np.linalg.norm(graph.adjoint(z - z_old))
        eps_pri = cfg.tol_abs * sq + cfg.tol_rel * max(np.linalg.norm(Dt), np.linalg.norm(z))
        eps_dual = cfg.tol_abs * sq + cfg.tol_rel * rho * np.linalg.norm(graph.adjoint(u))

        obj = _objective(evaluator, graph, lam, theta)
        if obj < best_obj:
            best_obj, best = obj, (theta, z)
        history.append(best_obj)

        if r <= eps_pri and s <= eps_dual:
            converged = True
            break
        if cfg.residual_balance and n_balance < cfg.max_balance:
            if r > cfg.balance_ratio * s:
                rho *= cfg.balance_factor
                u = u / cfg.balance_factor
                n_balance += 1
            elif s > cfg.balance_ratio * r:
                rho /= cfg.balance_factor
                u = u * cfg.balance_factor
                n_balance += 1

    if not converged:
        warnings.warn(
            f"ADMM stopped after {cfg.max_iter} iterations without meeting tolerances; "
            "returning the best iterate",
            ConvergenceWarning,
            stacklevel=2,
        )
        theta, z = best
    return _finish(losses, pairs, lam, theta, z, it, converged, history, cfg)


def _objective(losses, graph, lam, theta):
    fit = _fit_value(losses, theta)
    if len(lam) == 0:
        return fit
    return float(fit + lam @ np.linalg.norm(graph.diff(theta), axis=1))


def _fit_value(losses, theta):
    if isinstance(losses, _Stacked):
        return losses.value(theta)
    return float(sum(f.value(t) for f, t in zip(losses, theta)))


class _Stacked:
    """All-quadratic losses evaluated in one vectorized pass."""

    def __init__(self, losses):
        self.A = np.stack([f.A for f in losses])
        self.b = np.stack([f.b for f in losses])
        self.c = np.array([f.c for f in losses])

    def value(self, theta):
        quad = np.einsum("ji,jik,jk->", theta, self.A, theta)
        return float(quad - 2 * np.sum(self.b * theta) + self.c.sum())


def _finish(losses, pairs, lam, theta, z, iterations, converged, history, cfg):
    fused = np.all(z == 0, axis=1) if len(z) else np.zeros(0, dtype=bool)
    partition = extract_partition(theta, pairs, fused, cfg)
    theta = consensus_snap(theta, partition)
    graph = _Graph(pairs, len(losses))
    sol = FusionSolution(
        theta_hat=theta,
        edges=pairs,
        z=z,
        fused=fused,
        partition=partition,
        iterations=iterations,
        converged=converged,
        objective_value=_objective(losses, graph, lam, theta),
        history=history,
    )
    if cfg.refit:
        sol.refit = np.array(refit_clusters(losses, partition))
    return sol


def extract_partition(theta_hat, edges, fused, cfg: SolverConfig = SolverConfig()) -> list:
    """Connected components over edges that are thresholded to zero and numerically tied.

    ``fused`` may be a boolean vector per edge or the edge ``z`` matrix (rows
    exactly zero count as fused).
    """
    theta = np.asarray(theta_hat, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, None]
    m = theta.shape[0]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    fused = np.asarray(fused)
    if fused.ndim == 2:
        fused = np.all(fused == 0, axis=1)
    tol = cfg.fuse_tol * (1 + np.abs(theta).max()) if theta.size else 0.0
    close = np.linalg.norm(theta[edges[:, 0]] - theta[edges[:, 1]], axis=1) <= tol
    keep = edges[fused.astype(bool) & close]
    adj = coo_matrix((np.ones(len(keep)), (keep[:, 0], keep[:, 1])), shape=(m, m))
    _, labels = connected_components(adj, directed=False)
    groups: dict[int, list] = {}
    for j, lab in enumerate(labels):
        groups.setdefault(lab, []).append(j)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def consensus_snap(theta_hat, partition) -> np.ndarray:
    """Replace each cluster's estimates by their mean."""
    theta = np.array(theta_hat, dtype=float, copy=True)
    for members in partition:
        idx = list(members)
        theta[idx] = theta[idx].mean(axis=0)
    return theta


def refit_clusters(losses, partition) -> list:
    """Unpenalized pooled minimizer of each cluster's summed loss."""
    out = []
    for members in partition:
        parts = [losses[j] for j in members]
        if all(isinstance(f, QuadraticLoss) for f in parts):
            A = sum(f.A for f in parts)
            b = sum(f.b for f in parts)
            try:
                out.append(solve_spd(A, b))
            except NotPositiveDefinite as exc:
                raise SingularSystem(f"cluster {members}: {exc}") from None
            continue
        t = np.zeros(parts[0].dim)
        for _ in range(100):
            g = sum(f.gradient(t) for f in parts)
            if np.linalg.norm(g) <= 1e-12:
                break
            H = sum(f.hessian(t) for f in parts)
            try:
                t = t - solve_spd(H, g)
            except NotPositiveDefinite as exc:
                raise SingularSystem(f"cluster {members}: {exc}") from None
        out.append(t)
    return out
