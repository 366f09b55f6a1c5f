"""Simulation designs, metrics and the Monte Carlo driver."""
from .dgp import (
    DgpConfig,
    SimTruth,
    antithetic_plm,
    assign_clusters,
    centroids,
    generate_task,
    generate_tasks,
    true_nuisances,
)
from .metrics import adjusted_rand_index, cluster_sizes, labels_from_partition, rmse, wrmse
from .montecarlo import MonteCarloResult, Record, RepMetrics, run_monte_carlo, run_replication, worker_count

__all__ = [
    "DgpConfig",
    "MonteCarloResult",
    "Record",
    "RepMetrics",
    "SimTruth",
    "adjusted_rand_index",
    "antithetic_plm",
    "assign_clusters",
    "centroids",
    "cluster_sizes",
    "generate_task",
    "generate_tasks",
    "labels_from_partition",
    "rmse",
    "run_monte_carlo",
    "run_replication",
    "true_nuisances",
    "worker_count",
    "wrmse",
]
