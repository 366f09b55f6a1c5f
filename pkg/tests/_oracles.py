"""Independent reference implementations used by the test suite."""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def scalar_fused_objective(a, b, c, lam, theta):
    """sum_j a_j t_j^2 - 2 b_j t_j + c_j  +  sum_{j<k} lam_jk |t_j - t_k|."""
    theta = np.asarray(theta, dtype=float)
    val = float(np.sum(a * theta**2 - 2 * b * theta + c))
    m = len(theta)
    for j in range(m):
        for k in range(j + 1, m):
            val += lam[j, k] * abs(theta[j] - theta[k])
    return val


def scalar_fused_oracle(a, b, c, lam):
    """Exact minimizer of the scalar fused objective by enumerating ordered partitions.

    On the cone where tasks are grouped into blocks with increasing common
    values, the objective is a separable quadratic in the block values, so
    each ordered partition yields a closed-form candidate. The true optimum
    is the candidate of its own ordering, and every candidate is feasible,
    so the smallest candidate objective is the global minimum.
    """
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    lam = np.asarray(lam, dtype=float)
    m = len(a)
    best = (np.inf, None)
    for part in set_partitions(range(m)):
        for order in itertools.permutations(part):
            theta = np.empty(m)
            for g, block in enumerate(order):
                below = [j for h in order[:g] for j in h]
                above = [j for h in order[g + 1 :] for j in h]
                pull = sum(lam[j, k] for j in block for k in below) - sum(lam[j, k] for j in block for k in above)
                theta[list(block)] = (b[list(block)].sum() - pull / 2) / a[list(block)].sum()
            val = scalar_fused_objective(a, b, c, lam, theta)
            if val < best[0]:
                best = (val, theta)
    return best


def grid_refine(a, b, c, lam, center, step=1e-4, half_width=10):
    """Best objective on a grid of spacing ``step`` around ``center`` (m <= 3)."""
    offsets = np.arange(-half_width, half_width + 1) * step
    best = np.inf
    for delta in itertools.product(offsets, repeat=len(center)):
        best = min(best, scalar_fused_objective(a, b, c, lam, np.asarray(center) + delta))
    return best


def brute_force_ari(x, y):
    """ARI from the 2x2 pair-concordance table, computed in exact rationals."""
    n = len(x)
    both = only_x = only_y = neither = 0
    for i, j in itertools.combinations(range(n), 2):
        sx, sy = x[i] == x[j], y[i] == y[j]
        both += sx and sy
        only_x += sx and not sy
        only_y += sy and not sx
        neither += not sx and not sy
    num = 2 * (both * neither - only_x * only_y)
    den = (both + only_x) * (only_x + neither) + (both + only_y) * (only_y + neither)
    if den == 0:
        return 1.0
    return float(Fraction(num, den))


def labels_of(partition, m):
    lab = [0] * m
    for k, block in enumerate(partition):
        for j in block:
            lab[j] = k
    return lab
