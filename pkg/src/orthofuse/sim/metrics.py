"""Accuracy and cluster-recovery metrics."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, SingleElement

__all__ = ["adjusted_rand_index", "cluster_sizes", "labels_from_partition", "rmse", "wrmse"]


def _sq_err(theta_hat, theta_star):
    a = np.asarray(theta_hat, dtype=float)
    b = np.asarray(theta_star, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    diff = (a - b).reshape(a.shape[0], -1)
    return (diff**2).sum(axis=1)


def rmse(theta_hat, theta_star) -> float:
    return float(np.sqrt(_sq_err(theta_hat, theta_star).mean()))


def wrmse(theta_hat, theta_star, sizes) -> float:
    """Squared errors weighted by ``sizes`` (each task's true-cluster sample size)."""
    e = _sq_err(theta_hat, theta_star)
    w = np.asarray(sizes, dtype=float)
    if w.shape != e.shape:
        raise DimensionMismatch("one weight per task is required")
    return float(np.sqrt(w @ e / w.sum()))


def cluster_sizes(labels, n) -> np.ndarray:
    """Per task, the total sample size of the cluster it belongs to."""
    labels = np.asarray(labels)
    n = np.asarray(n, dtype=float)
    return np.array([n[labels == lab].sum() for lab in labels])


def labels_from_partition(partition, m=None) -> np.ndarray:
    m = sum(len(g) for g in partition) if m is None else m
    lab = np.full(m, -1, dtype=np.int64)
    for k, g in enumerate(partition):
        lab[list(g)] = k
    if np.any(lab < 0):
        raise ValueError("partition does not cover every task")
    return lab


def _as_labels(x):
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], (list, tuple, set, frozenset)):
        return labels_from_partition([tuple(g) for g in x])
    return np.asarray(x)


def adjusted_rand_index(true_partition, est_partition) -> float:
    """Pair-counting ARI from the contingency table.

    Either argument may be a label vector or a list of clusters. When both
    partitions are all-singletons or both a single block, the index is 1.
    """
    a = _as_labels(true_partition)
    b = _as_labels(est_partition)
    if a.shape != b.shape:
        raise DimensionMismatch("partitions cover different task sets")
    m = a.size
    if m < 2:
        raise SingleElement("ARI needs at least two elements")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(counts):
        return sum(int(c) * (int(c) - 1) // 2 for c in np.ravel(counts))

    # integer arithmetic throughout; one correctly rounded division at the end
    index = pairs(table)
    sa, sb = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = m * (m - 1) // 2
    num = 2 * (index * total - sa * sb)
    den = (sa + sb) * total - 2 * sa * sb
    if den == 0:
        return 1.0
    return num / den
