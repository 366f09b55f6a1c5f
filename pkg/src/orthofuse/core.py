"""Domain types, seeded randomness and the small dense linear-algebra kernel."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, TooFewObservations

__all__ = [
    "RngHandle",
    "TaskDataset",
    "solve_spd",
    "split_dataset",
    "standard_normal",
    "stream_id",
]


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RngHandle:
    """A (seed, stream) pair naming one independent random stream.

    Streams are realised with numpy's PCG64 seeded through ``SeedSequence``
    with ``stream_id`` as spawn key, so equal pairs give bit-identical draws
    and distinct stream ids give statistically independent streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def fork(self, label: int) -> "RngHandle":
        """Sub-stream for one purpose (data draw, split, learner, ...)."""
        if not 0 <= label < 2**16:
            raise ValueError("label must fit in 16 bits")
        if self.stream_id >> 48:
            raise ValueError("stream already forked")
        return RngHandle(self.seed, self.stream_id | (label + 1) << 48)


def stream_id(replication: int, task: int) -> int:
    """Non-overlapping stream id for (replication, task); task < 2**20."""
    if not 0 <= task < 2**20:
        raise ValueError("task index must be < 2**20")
    return (replication << 20) | task


def standard_normal(rng: RngHandle, count: int) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be non-negative")
    return rng.generator().standard_normal(count)


@dataclass(frozen=True)
class TaskDataset:
    """One task's observations and (optionally) its fold partition.

    ``outcome`` is ``(n,)`` or, for two-period DID data, ``(n, 2)`` holding
    ``(Y0, Y1)``. ``treatment`` is ``(n,)`` or ``(n, d)`` for a vector
    treatment in the partially linear model. ``folds`` is a tuple of sorted
    row-index arrays, or ``None`` before splitting.
    """

    task_id: int
    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    folds: tuple | None = None
    label: str | None = field(default=None, compare=False)

    def __post_init__(self):
        y = _frozen(self.outcome)
        t = _frozen(self.treatment)
        x = _frozen(self.covariates)
        if x.ndim == 1:
            x = _frozen(x[:, None])
        n = x.shape[0]
        if x.ndim != 2 or x.shape[1] < 1:
            raise DimensionMismatch("covariates must be an n x p matrix with p >= 1")
        if y.shape[0] != n or t.shape[0] != n:
            raise DimensionMismatch(
                f"column lengths differ: outcome {y.shape[0]}, treatment {t.shape[0]}, covariates {n}"
            )
        if y.ndim > 2 or t.ndim > 2:
            raise DimensionMismatch("outcome/treatment must be vectors or n x k matrices")
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "covariates", x)
        if self.folds is not None:
            folds = tuple(_frozen(np.sort(f), dtype=np.int64) for f in self.folds)
            _check_partition(folds, n)
            object.__setattr__(self, "folds", folds)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_folds(self) -> int:
        return 0 if self.folds is None else len(self.folds)

    def rows(self, fold) -> np.ndarray:
        """Resolve a fold designator to row indices.

        ``None`` means all rows, an int is a fold id, ``("not", r)`` is the
        complement of fold ``r``, and an array is taken as explicit rows.
        """
        if fold is None:
            return np.arange(self.n)
        if isinstance(fold, tuple) and len(fold) == 2 and fold[0] == "not":
            r = self._fold(fold[1])
            return np.setdiff1d(np.arange(self.n), r)
        if isinstance(fold, (int, np.integer)):
            return self._fold(fold)
        return np.asarray(fold, dtype=np.int64)

    def _fold(self, r):
        if self.folds is None:
            raise ValueError("dataset has not been split")
        if not 0 <= r < len(self.folds):
            raise ValueError(f"fold {r} does not exist ({len(self.folds)} folds)")
        return self.folds[r]

    @property
    def delta_outcome(self) -> np.ndarray:
        if self.outcome.ndim != 2 or self.outcome.shape[1] != 2:
            raise DimensionMismatch("two-period outcome (Y0, Y1) required")
        return self.outcome[:, 1] - self.outcome[:, 0]


def _check_partition(folds, n):
    sizes = [len(f) for f in folds]
    allrows = np.concatenate(folds) if folds else np.empty(0, dtype=np.int64)
    if len(allrows) != n or not np.array_equal(np.sort(allrows), np.arange(n)):
        raise ValueError("folds must be disjoint and cover every row")
    if max(sizes) - min(sizes) > 1:
        raise ValueError("fold sizes may differ by at most one")


def split_dataset(data: TaskDataset, folds: int, rng: RngHandle) -> TaskDataset:
    """Random permutation of the rows chunked into ``folds`` near-equal folds."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if data.n < 2 * folds:
        raise TooFewObservations(
            f"task {data.task_id}: {data.n} rows cannot fill {folds} folds of size >= 2"
        )
    perm = rng.generator().permutation(data.n)
    return replace(data, folds=tuple(np.array_split(perm, folds)))


def solve_spd(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive-definite ``A`` by Cholesky."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    d = A.shape[0]
    if A.shape != (d, d) or b.shape[0] != d:
        raise DimensionMismatch(f"shapes {A.shape} and {b.shape} do not match")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-10 * max(scale, 1e-300)):
        raise NotPositiveDefinite("matrix is not symmetric")
    tol = 1e-12 * np.trace(A) / d
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if np.trace(A) <= 0 or np.any(np.diag(L) ** 2 <= tol):
        raise NotPositiveDefinite("Cholesky pivot below 1e-12 * trace / d")
    y = _forward(L, b)
    return _forward(L.T[::-1, ::-1], y[::-1])[::-1]


def _forward(L, b):
    # lower-triangular substitution; d is tiny so a Python loop is fine
    x = np.array(b, dtype=float, copy=True)
    for i in range(L.shape[0]):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x
