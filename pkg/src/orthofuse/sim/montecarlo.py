"""Replicated simulation studies with deterministic, order-independent output."""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import RngHandle, stream_id
from ..errors import ConvergenceWarning, OrthofuseError
from ..pipeline import RNG_DATA, PipelineConfig, parse_method, prepare_tasks, run_method
from .dgp import DgpConfig, assign_clusters, generate_tasks
from .metrics import adjusted_rand_index, cluster_sizes, rmse, wrmse

__all__ = ["MonteCarloResult", "Record", "RepMetrics", "run_monte_carlo", "run_replication", "worker_count"]

TRUTH_TASK = 2**20 - 1  # stream slot reserved for the cluster draw
RESAMPLE_OFFSET = 2**27  # replication ids used for the single retry


@dataclass(frozen=True)
class Record:
    rep: int
    method: str
    task: int
    cluster_true: int
    cluster_est: int
    theta_true: float
    theta_hat: float
    se: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class RepMetrics:
    rep: int
    method: str
    rmse: float
    wrmse: float
    ari: float
    n_clusters: int
    coverage: float
    converged: bool


@dataclass
class MonteCarloResult:
    records: list
    metrics: list
    failures: list = field(default_factory=list)
    methods: tuple = ()

    def for_method(self, method) -> list[RepMetrics]:
        name = parse_method(method).name
        return [r for r in self.metrics if r.method == name]

    def summary(self) -> dict:
        out = {}
        for name in self.methods:
            rows = [r for r in self.metrics if r.method == name]
            recs = [r for r in self.records if r.method == name]
            out[name] = _summarize(rows, recs)
        out["failures"] = [{"rep": rep, "error": msg} for rep, msg in self.failures]
        return out


def _summarize(rows, recs) -> dict:
    if not rows:
        return {"replications": 0}
    col = lambda k: np.array([getattr(r, k) for r in rows], dtype=float)  # noqa: E731
    cover = np.mean([r.ci_lo <= r.theta_true <= r.ci_hi for r in recs])
    return {
        "replications": len(rows),
        "rmse_mean": float(col("rmse").mean()),
        "rmse_median": float(np.median(col("rmse"))),
        "wrmse_mean": float(col("wrmse").mean()),
        "wrmse_median": float(np.median(col("wrmse"))),
        "ari_mean": float(col("ari").mean()),
        "ari_median": float(np.median(col("ari"))),
        "coverage": float(cover),
        "nonconverged": int(sum(not r.converged for r in rows)),
    }


def worker_count(requested: int | None = None) -> int:
    """Requested count, else ``ORTHOFUSE_THREADS``, else the CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("ORTHOFUSE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"ORTHOFUSE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _one_draw(cfg: DgpConfig, methods, pcfg: PipelineConfig, seed: int, rep_id: int, rep: int):
    truth = assign_clusters(cfg, RngHandle(seed, stream_id(rep_id, TRUTH_TASK)))
    handles = [RngHandle(seed, stream_id(rep_id, j)) for j in range(cfg.m)]
    tasks = generate_tasks(cfg, truth, [h.fork(RNG_DATA) for h in handles])
    prep = prepare_tasks(tasks, pcfg, handles)
    n = np.array([t.n for t in tasks])
    sizes = cluster_sizes(truth.cluster_of, n)
    records, metrics = [], []
    for method in methods:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            res = run_method(prep, method)
        est = res.task_estimates
        lo, hi = _ci(res, "ci_lo"), _ci(res, "ci_hi")
        for j in range(cfg.m):
            records.append(
                Record(
                    rep, method.name, j, int(truth.cluster_of[j]), int(res.labels[j]),
                    float(truth.theta_star[j]), float(est[j]), float(res.se[j, 0]),
                    float(lo[j]), float(hi[j]),
                )
            )
        cover = np.mean((lo <= truth.theta_star) & (truth.theta_star <= hi))
        metrics.append(
            RepMetrics(
                rep, method.name,
                rmse(est, truth.theta_star),
                wrmse(est, truth.theta_star, sizes),
                adjusted_rand_index(truth.cluster_of, res.labels),
                len(res.partition),
                float(cover),
                bool(res.solution.converged),
            )
        )
    return records, metrics


def _ci(res, attr):
    out = np.empty(len(res.labels))
    for ci in res.inference:
        out[list(ci.members)] = getattr(ci, attr)[0]
    return out


def run_replication(cfg: DgpConfig, methods, rep: int, pcfg: PipelineConfig | None = None, seed: int | None = None):
    """One replication; a failed draw is resampled once before giving up.

    Returns ``(records, metrics, failure)`` where ``failure`` is ``None`` or
    the error message of the second attempt.
    """
    methods = [parse_method(m) for m in methods]
    pcfg = pcfg or PipelineConfig(model=cfg.model)
    seed = cfg.seed if seed is None else seed
    try:
        return (*_one_draw(cfg, methods, pcfg, seed, rep, rep), None)
    except OrthofuseError:
        pass
    try:
        return (*_one_draw(cfg, methods, pcfg, seed, rep + RESAMPLE_OFFSET, rep), None)
    except OrthofuseError as exc:
        return [], [], f"{type(exc).__name__}: {exc}"


def _job(args):
    return run_replication(*args)


def run_monte_carlo(
    cfg: DgpConfig,
    methods,
    reps: int,
    pcfg: PipelineConfig | None = None,
    seed: int | None = None,
    workers: int | None = None,
) -> MonteCarloResult:
    """Run ``reps`` independent replications of every method on shared draws."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if reps >= RESAMPLE_OFFSET:
        raise ValueError("too many replications")
    methods = [parse_method(m) for m in methods]
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError("duplicate methods")
    pcfg = pcfg or PipelineConfig(model=cfg.model)
    if pcfg.model != cfg.model:
        raise ValueError("pipeline and design disagree on the model")
    seed = cfg.seed if seed is None else seed
    jobs = [(cfg, methods, r, pcfg, seed) for r in range(reps)]
    n_workers = min(worker_count(workers), reps)
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    records, metrics, failures = [], [], []
    for r, (rec, met, fail) in enumerate(results):
        records.extend(rec)
        metrics.extend(met)
        if fail is not None:
            failures.append((r, fail))
    return MonteCarloResult(records, metrics, failures, tuple(names))


def records_as_rows(records) -> list[dict]:
    return [asdict(r) for r in records]
