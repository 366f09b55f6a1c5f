"""Empirical Neyman-orthogonal losses for the PLM, ATE and DID models.

Every shipped loss is an exact quadratic ``f(t) = t'At - 2b't + c``. Besides
the aggregate coefficients a :class:`QuadraticLoss` keeps the per-observation
pieces ``(a_i, b_i, c_i)`` whose sum is the aggregate; inference needs the
observation-level scores, which the aggregate alone cannot provide.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import TaskDataset, solve_spd
from .errors import (
    DegenerateDesign,
    DimensionMismatch,
    NoTreatedInWeightFold,
    NotPositiveDefinite,
    RequiresTruth,
    UnclippedPropensity,
    ZeroControlMass,
)

__all__ = [
    "AveragedLoss",
    "QuadraticLoss",
    "SmoothLossOracle",
    "aipw_pseudo_outcome",
    "build_ate_loss",
    "build_did_loss",
    "build_loss",
    "build_plm_loss",
    "build_plm_plugin_loss",
    "crossfit_loss",
    "did_weights",
    "orthogonality_diagnostic",
    "perturbation_direction",
]


@runtime_checkable
class SmoothLossOracle(Protocol):
    dim: int
    n_eff: int
    convex: bool

    def value(self, theta) -> float: ...

    def gradient(self, theta) -> np.ndarray: ...

    def hessian(self, theta) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class QuadraticLoss:
    A: np.ndarray
    b: np.ndarray
    c: float
    n_eff: int
    obs_a: np.ndarray | None = None
    obs_b: np.ndarray | None = None
    obs_c: np.ndarray | None = None
    convex: bool = True

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape != (b.size, b.size):
            raise DimensionMismatch(f"A is {A.shape} but b has length {b.size}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @classmethod
    def from_observations(cls, obs_a, obs_b, obs_c, n_eff=None):
        """Aggregate per-row quadratics; ``obs_a`` is ``(n, d, d)``."""
        obs_a = np.asarray(obs_a, dtype=float)
        obs_b = np.asarray(obs_b, dtype=float)
        obs_c = np.asarray(obs_c, dtype=float)
        n = obs_b.shape[0]
        return cls(
            obs_a.sum(axis=0),
            obs_b.sum(axis=0),
            float(obs_c.sum()),
            n if n_eff is None else n_eff,
            obs_a,
            obs_b,
            obs_c,
        )

    @property
    def dim(self) -> int:
        return self.b.size

    def value(self, theta) -> float:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        return float(t @ self.A @ t - 2 * self.b @ t + self.c)

    def gradient(self, theta) -> np.ndarray:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        return 2 * (self.A @ t - self.b)

    def hessian(self, theta=None) -> np.ndarray:
        return 2 * self.A

    def eval(self, theta):
        return self.value(theta), self.gradient(theta), self.hessian(theta)

    def minimizer(self) -> np.ndarray:
        try:
            return solve_spd(self.A, self.b)
        except NotPositiveDefinite as exc:
            raise DegenerateDesign(f"quadratic loss has no unique minimizer: {exc}") from None

    def obs_gradients(self, theta) -> np.ndarray:
        """Per-observation scores, shape ``(n, d)``."""
        self._need_obs()
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        return 2 * (self.obs_a @ t - self.obs_b)

    def obs_hessians(self, theta=None) -> np.ndarray:
        self._need_obs()
        return 2 * self.obs_a

    def _need_obs(self):
        if self.obs_a is None:
            raise ValueError("loss was built without per-observation terms")


@dataclass(frozen=True, eq=False)
class AveragedLoss:
    """Arithmetic mean of arbitrary loss oracles (generic cross-fitting)."""

    parts: tuple
    n_eff: int
    convex: bool = True

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def value(self, theta):
        return float(np.mean([p.value(theta) for p in self.parts]))

    def gradient(self, theta):
        return np.mean([p.gradient(theta) for p in self.parts], axis=0)

    def hessian(self, theta):
        return np.mean([p.hessian(theta) for p in self.parts], axis=0)

    def eval(self, theta):
        return self.value(theta), self.gradient(theta), self.hessian(theta)


def _check_identified(A):
    d = A.shape[0]
    tr = np.trace(A)
    if not tr > 0 or np.linalg.eigvalsh(A).min() <= 1e-12 * tr / d:
        raise DegenerateDesign("loss curvature is singular; the target is not identified")


def _predict(fit, X):
    return np.asarray(fit.predict(X), dtype=float)


def build_plm_loss(data: TaskDataset, fits: Mapping, fold=None) -> QuadraticLoss:
    """Residual-on-residual loss ``sum {(Y - m(X)) - t'(T - h(X))}^2``."""
    rows = data.rows(fold)
    X = data.covariates[rows]
    y_res = data.outcome[rows] - _predict(fits["m"], X)
    T = data.treatment[rows]
    h = _predict(fits["h"], X)
    t_res = (T - h) if T.ndim == 1 else T - h.reshape(T.shape[0], -1)
    t_res = t_res.reshape(len(rows), -1)
    loss = QuadraticLoss.from_observations(
        t_res[:, :, None] * t_res[:, None, :], t_res * y_res[:, None], y_res**2
    )
    _check_identified(loss.A)
    return loss


def build_plm_plugin_loss(data: TaskDataset, fits: Mapping, fold=None) -> QuadraticLoss:
    """Non-orthogonal plug-in loss ``sum (Y - g(X) - t'T)^2`` (diagnostics only)."""
    rows = data.rows(fold)
    X = data.covariates[rows]
    r = data.outcome[rows] - _predict(fits["g"], X)
    T = data.treatment[rows].reshape(len(rows), -1)
    loss = QuadraticLoss.from_observations(T[:, :, None] * T[:, None, :], T * r[:, None], r**2)
    _check_identified(loss.A)
    return loss


def aipw_pseudo_outcome(D, Y, pi, m1, m0) -> np.ndarray:
    """Doubly-robust response whose mean identifies the ATE."""
    pi = np.asarray(pi, dtype=float)
    if np.any((pi <= 0) | (pi >= 1)):
        raise UnclippedPropensity("propensity scores must lie strictly inside (0, 1)")
    return D * (Y - m1) / pi - (1 - D) * (Y - m0) / (1 - pi) + m1 - m0


def build_ate_loss(data: TaskDataset, fits: Mapping, fold=None) -> QuadraticLoss:
    """``sum (t - Yhat_i)^2`` over the fold's AIPW pseudo-outcomes."""
    rows = data.rows(fold)
    X = data.covariates[rows]
    yhat = aipw_pseudo_outcome(
        data.treatment[rows],
        data.outcome[rows],
        _predict(fits["pi"], X),
        _predict(fits["m1"], X),
        _predict(fits["m0"], X),
    )
    n = len(rows)
    loss = QuadraticLoss.from_observations(np.ones((n, 1, 1)), yhat[:, None], yhat**2)
    _check_identified(loss.A)
    return loss


def did_weights(data: TaskDataset, fits: Mapping, fold_weights=None, fold_loss=None):
    """Normalized DID weights and transformed outcomes on the loss fold.

    Returns ``(w1, w0, A)`` where the normalizers (treated share and control
    odds mass) come from ``fold_weights``.
    """
    wr = data.rows(fold_weights)
    Dw = data.treatment[wr]
    pw = _predict(fits["pi"], data.covariates[wr])
    if np.any((pw <= 0) | (pw >= 1)):
        raise UnclippedPropensity("propensity scores must lie strictly inside (0, 1)")
    d_bar = Dw.mean()
    v_bar = np.mean(pw * (1 - Dw) / (1 - pw))
    if d_bar <= 0:
        raise NoTreatedInWeightFold(f"task {data.task_id}: no treated units in the weight fold")
    if v_bar <= 0:
        raise ZeroControlMass(f"task {data.task_id}: no control odds mass in the weight fold")

    lr = data.rows(fold_loss)
    X = data.covariates[lr]
    D = data.treatment[lr]
    pi = _predict(fits["pi"], X)
    if np.any((pi <= 0) | (pi >= 1)):
        raise UnclippedPropensity("propensity scores must lie strictly inside (0, 1)")
    w1 = D / d_bar
    w0 = pi * (1 - D) / ((1 - pi) * v_bar)
    A = (w1 - w0) * (data.delta_outcome[lr] - _predict(fits["m"], X))
    return w1, w0, A


def build_did_loss(data: TaskDataset, fits: Mapping, fold_weights=None, fold_loss=None) -> QuadraticLoss:
    """``a (t - b)^2`` with ``a = mean(w1)`` and ``b = sum(A) / sum(w1)``.

    The observation pieces are ``(w1_i t^2 - 2 A_i t) / n`` so that they sum
    to the task loss (up to the constant).
    """
    w1, _, A = did_weights(data, fits, fold_weights, fold_loss)
    n = len(w1)
    if w1.sum() <= 0:
        raise DegenerateDesign(f"task {data.task_id}: no treated units in the loss fold")
    a = w1.mean()
    bb = A.sum() / w1.sum()
    obs_c = np.full(n, a * bb**2 / n)
    return QuadraticLoss(
        [[a]], [a * bb], a * bb**2, n, (w1 / n)[:, None, None], (A / n)[:, None], obs_c
    )


def build_loss(model: str, data: TaskDataset, fits: Mapping, fold=None, weight_fold=None):
    """Dispatch to the model's builder; ``weight_fold`` is used by DID only."""
    if model == "plm":
        return build_plm_loss(data, fits, fold)
    if model == "ate":
        return build_ate_loss(data, fits, fold)
    if model == "did":
        return build_did_loss(data, fits, weight_fold, fold)
    raise ValueError(f"unknown model {model!r}")


def crossfit_loss(per_fold_losses: Sequence, R: int):
    """Average of the R fold losses; ``n_eff`` counts every row once."""
    if R < 2 or len(per_fold_losses) != R:
        raise ValueError("need exactly R >= 2 fold losses")
    dims = {f.dim for f in per_fold_losses}
    if len(dims) != 1:
        raise DimensionMismatch(f"fold losses disagree on dimension: {sorted(dims)}")
    n_eff = int(sum(f.n_eff for f in per_fold_losses))
    if all(isinstance(f, QuadraticLoss) for f in per_fold_losses):
        A = sum(f.A for f in per_fold_losses) / R
        b = sum(f.b for f in per_fold_losses) / R
        c = sum(f.c for f in per_fold_losses) / R
        if all(f.obs_a is not None for f in per_fold_losses):
            oa = np.concatenate([f.obs_a for f in per_fold_losses]) / R
            ob = np.concatenate([f.obs_b for f in per_fold_losses]) / R
            oc = np.concatenate([f.obs_c for f in per_fold_losses]) / R
            return QuadraticLoss(A, b, c, n_eff, oa, ob, oc)
        return QuadraticLoss(A, b, c, n_eff)
    return AveragedLoss(tuple(per_fold_losses), n_eff, all(f.convex for f in per_fold_losses))


def perturbation_direction(X) -> np.ndarray:
    """Fixed bounded direction ``tanh(sum_r x_r)`` for nuisance perturbations."""
    return np.tanh(np.asarray(X, dtype=float).sum(axis=1))


class _Shifted:
    def __init__(self, base, eps):
        self.base = base
        self.eps = eps

    def predict(self, X):
        return _predict(self.base, X) + self.eps * perturbation_direction(X)


def orthogonality_diagnostic(
    loss_builder: Callable,
    data: TaskDataset,
    fits: Mapping,
    direction_scale: float,
    theta_star=None,
    perturb: Sequence[str] | None = None,
    antithetic: TaskDataset | None = None,
) -> float:
    """Sensitivity of the score at the truth to a nuisance perturbation.

    Returns ``|grad f(t*, eta* + eps h) - grad f(t*, eta*)| / (eps n)``
    where ``fits`` are the true nuisance functions and ``h = tanh(sum x)``
    is added to every nuisance named in ``perturb`` (default: all). For an
    orthogonal loss this is driven by second-order terms plus sampling noise
    of order ``n**-1/2``; for a plug-in loss it stays of order one.

    ``antithetic`` optionally supplies the same covariates with noise
    reflected about the true conditional means; averaging the two gradient
    shifts cancels the odd-in-noise sampling term.
    """
    if theta_star is None:
        raise RequiresTruth("the orthogonality diagnostic needs the true parameter")
    eps = float(direction_scale)
    if eps == 0:
        return 0.0
    names = list(fits) if perturb is None else list(perturb)
    shifted = {k: (_Shifted(v, eps) if k in names else v) for k, v in fits.items()}
    theta = np.atleast_1d(np.asarray(theta_star, dtype=float))

    def shift(ds):
        f0 = loss_builder(ds, fits)
        f1 = loss_builder(ds, shifted)
        return f1.gradient(theta) - f0.gradient(theta), f0.n_eff

    delta, n = shift(data)
    if antithetic is not None:
        delta2, _ = shift(antithetic)
        delta = 0.5 * (delta + delta2)
    return float(np.linalg.norm(delta) / (eps * n))
