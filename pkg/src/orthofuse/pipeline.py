"""End-to-end estimator: pilots, penalties, split nuisances, fused solve, inference.

The per-task work that does not depend on the fusion method (sample split,
nuisance fits, orthogonal losses, pilot estimates) lives in
:class:`PreparedTasks`, so several methods can be compared on identical
draws. Random streams are forked from a per-task handle with fixed labels.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .core import RngHandle, TaskDataset, split_dataset, stream_id
from .fusion import FusionSolution, SolverConfig, solve_fused
from .inference import ClusterInference, sandwich_inference
from .losses import build_loss, crossfit_loss
from .nuisance import NuisanceLearnerSpec, fit_task_nuisances
from .weights import FusionHyperparams, PenaltyMatrix, compute_weights, fit_pilot, uniform_penalty

__all__ = [
    "Method",
    "PipelineConfig",
    "PipelineResult",
    "PreparedTasks",
    "fit_pipeline",
    "parse_method",
    "prepare_tasks",
    "run_method",
]

# fork labels of a task's stream
RNG_DATA, RNG_SPLIT, RNG_PILOT, RNG_NUISANCE = 0, 1, 2, 3

_METHOD_RE = re.compile(r"^(adaptive|personalized|uniform|fixed)(?:\(([^)]*)\))?$")


@dataclass(frozen=True)
class Method:
    """A fusion rule: ``adaptive``, ``personalized`` or a constant penalty.

    ``uniform(lam)`` and ``fixed(lam)`` are the same estimator; the two names
    label the uniform-fusion baseline and the fixed-penalty ablation.
    """

    kind: str
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in ("adaptive", "personalized", "uniform", "fixed"):
            raise ValueError(f"unknown method {self.kind!r}")
        if self.kind in ("uniform", "fixed"):
            if self.lam is None or not self.lam >= 0:
                raise ValueError(f"{self.kind} needs a non-negative penalty")
        elif self.lam is not None:
            raise ValueError(f"{self.kind} takes no penalty")

    @property
    def name(self) -> str:
        return self.kind if self.lam is None else f"{self.kind}({self.lam:g})"

    @property
    def needs_pilot(self) -> bool:
        return self.kind == "adaptive"


def parse_method(text) -> Method:
    if isinstance(text, Method):
        return text
    m = _METHOD_RE.match(str(text).strip())
    if not m:
        raise ValueError(f"cannot parse method {text!r}")
    kind, arg = m.groups()
    if arg is None or arg == "":
        return Method(kind)
    return Method(kind, float(arg))


@dataclass(frozen=True)
class PipelineConfig:
    model: str = "plm"
    learner: NuisanceLearnerSpec = NuisanceLearnerSpec()
    fusion: FusionHyperparams = FusionHyperparams()
    solver: SolverConfig = SolverConfig()
    crossfit_R: int = 2
    cross_fit: bool = False
    level: float = 0.95
    clip: tuple = (0.05, 0.95)
    did_normalizer: str = "loss"

    def __post_init__(self):
        if self.model not in ("plm", "ate", "did"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.did_normalizer not in ("loss", "nuisance"):
            raise ValueError("did_normalizer must be 'loss' or 'nuisance'")
        if self.crossfit_R < 2:
            raise ValueError("crossfit_R must be at least 2")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")


@dataclass
class PreparedTasks:
    tasks: list
    losses: list
    cfg: PipelineConfig
    handles: list
    pilots: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.tasks)

    def ensure_pilots(self) -> np.ndarray:
        if self.pilots is None:
            self.pilots = np.array(
                [
                    np.atleast_1d(fit_pilot(t, self.cfg.model, self.cfg.learner, h.fork(RNG_PILOT), self.cfg.clip))
                    for t, h in zip(self.tasks, self.handles)
                ]
            )
        return self.pilots


@dataclass
class PipelineResult:
    method: Method
    theta_hat: np.ndarray
    partition: list
    labels: np.ndarray
    solution: FusionSolution
    inference: list[ClusterInference]
    penalties: PenaltyMatrix
    pilots: np.ndarray | None = None
    se: np.ndarray = field(default=None)

    @property
    def task_estimates(self) -> np.ndarray:
        """``theta_hat`` as a flat vector when the target is scalar."""
        return self.theta_hat[:, 0] if self.theta_hat.shape[1] == 1 else self.theta_hat


def task_handles(tasks, seed: int, replication: int = 0) -> list[RngHandle]:
    return [RngHandle(seed, stream_id(replication, t.task_id)) for t in tasks]


def _task_loss(data: TaskDataset, cfg: PipelineConfig, rng: RngHandle):
    def one(train, held_out):
        fits = fit_task_nuisances(data, cfg.model, cfg.learner, train, rng, cfg.clip)
        weight_fold = held_out if cfg.did_normalizer == "loss" else train
        return build_loss(cfg.model, data, fits, fold=held_out, weight_fold=weight_fold)

    if cfg.cross_fit:
        per_fold = [one(("not", r), r) for r in range(cfg.crossfit_R)]
        return crossfit_loss(per_fold, cfg.crossfit_R)
    return one(0, ("not", 0))


def prepare_tasks(tasks, cfg: PipelineConfig, handles) -> PreparedTasks:
    """Split every task and build its orthogonal loss on held-out rows.

    Nuisances are fit on fold 0 and the loss uses the remaining rows. With
    ``cross_fit`` every fold takes a turn and the fold losses are averaged.
    DID weight normalizers are averaged over the held-out rows by default;
    ``did_normalizer="nuisance"`` averages them over the training rows
    instead, where in-sample propensities of a flexible learner are
    optimistic and the control weights inflate.
    """
    tasks = list(tasks)
    if len(tasks) != len(handles):
        raise ValueError("one random handle per task is required")
    split, losses = [], []
    for t, h in zip(tasks, handles):
        s = split_dataset(t, cfg.crossfit_R, h.fork(RNG_SPLIT))
        split.append(s)
        losses.append(_task_loss(s, cfg, h.fork(RNG_NUISANCE)))
    return PreparedTasks(split, losses, cfg, list(handles))


def penalties_for(method: Method, prep: PreparedTasks) -> PenaltyMatrix:
    if method.kind == "adaptive":
        return compute_weights(prep.ensure_pilots(), prep.cfg.fusion)
    if method.kind == "personalized":
        return uniform_penalty(prep.m, 0.0)
    return uniform_penalty(prep.m, method.lam)


def run_method(prep: PreparedTasks, method) -> PipelineResult:
    method = parse_method(method)
    pen = penalties_for(method, prep)
    sol = solve_fused(prep.losses, pen, prep.cfg.solver)
    theta = sol.refit[sol.labels] if sol.refit is not None else sol.theta_hat
    inf = sandwich_inference(sol.partition, prep.losses, theta, prep.cfg.level)
    se = np.empty_like(theta)
    for ci in inf:
        se[list(ci.members)] = ci.se
    return PipelineResult(
        method=method,
        theta_hat=theta,
        partition=sol.partition,
        labels=sol.labels,
        solution=sol,
        inference=inf,
        penalties=pen,
        pilots=prep.pilots if method.needs_pilot else None,
        se=se,
    )


def fit_pipeline(tasks, cfg: PipelineConfig = PipelineConfig(), method="adaptive", seed: int = 0, replication: int = 0):
    """Run the full estimator on ``tasks`` with one method."""
    tasks = list(tasks)
    prep = prepare_tasks(tasks, cfg, task_handles(tasks, seed, replication))
    return run_method(prep, method)
