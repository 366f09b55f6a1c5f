import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthofuse.core import RngHandle, TaskDataset, solve_spd, split_dataset, standard_normal, stream_id
from orthofuse.errors import DimensionMismatch, NotPositiveDefinite, TooFewObservations


def _task(n=10, p=2, folds=None):
    rng = np.random.default_rng(0)
    return TaskDataset(0, rng.normal(size=n), rng.normal(size=n), rng.normal(size=(n, p)), folds)


class TestSolveSpd:
    def test_scalar(self):
        np.testing.assert_allclose(solve_spd([[2.0]], [6.0]), [3.0])

    def test_identity(self):
        np.testing.assert_allclose(solve_spd(np.eye(2), [1.0, -1.0]), [1.0, -1.0])

    def test_two_by_two_by_hand(self):
        A = np.array([[4.0, 2.0], [2.0, 3.0]])
        x = solve_spd(A, [2.0, 1.0])
        np.testing.assert_allclose(x, [0.5, 0.0], atol=1e-14)
        np.testing.assert_allclose(A @ x, [2.0, 1.0], atol=1e-14)

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            solve_spd([[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0])

    def test_tiny_pivot_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            solve_spd([[1.0, 0.0], [0.0, 1e-14]], [1.0, 1.0])

    def test_asymmetric_rejected(self):
        with pytest.raises(NotPositiveDefinite, match="symmetric"):
            solve_spd([[2.0, 1.0], [0.0, 2.0]], [1.0, 1.0])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_round_trip_residual(self, d, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(d, d))
        A = M @ M.T + d * np.eye(d)
        b = rng.normal(size=d) * 10
        x = solve_spd(A, b)
        assert np.max(np.abs(A @ x - b)) <= 1e-8 * (1 + np.max(np.abs(b)))


class TestRng:
    def test_same_stream_same_draws(self):
        a = standard_normal(RngHandle(5, 7), 100)
        b = standard_normal(RngHandle(5, 7), 100)
        assert np.array_equal(a, b)

    def test_different_streams_differ(self):
        assert not np.array_equal(standard_normal(RngHandle(5, 7), 10), standard_normal(RngHandle(5, 8), 10))

    def test_empty(self):
        assert standard_normal(RngHandle(1), 0).shape == (0,)

    def test_moments(self):
        z = standard_normal(RngHandle(123, 0), 10**6)
        assert abs(z.mean()) <= 0.005
        assert 0.99 <= z.var() <= 1.01

    def test_stream_ids_do_not_collide(self):
        ids = {stream_id(r, t) for r in range(50) for t in range(64)}
        assert len(ids) == 50 * 64

    def test_fork_labels_distinct(self):
        h = RngHandle(3, stream_id(2, 5))
        forks = {h.fork(k).stream_id for k in range(4)}
        assert len(forks) == 4 and h.stream_id not in forks

    def test_fork_twice_refused(self):
        with pytest.raises(ValueError):
            RngHandle(1).fork(0).fork(0)

    def test_bad_seed(self):
        with pytest.raises(ValueError):
            RngHandle(-1)


class TestTaskDataset:
    def test_immutable(self):
        t = _task()
        with pytest.raises(ValueError):
            t.outcome[0] = 1.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            TaskDataset(0, np.zeros(5), np.zeros(4), np.zeros((5, 1)))

    def test_vector_covariate_promoted(self):
        assert TaskDataset(0, np.zeros(3), np.zeros(3), np.arange(3.0)).p == 1

    def test_bad_folds_rejected(self):
        with pytest.raises(ValueError):
            _task(n=4, folds=([0, 1], [1, 2, 3]))
        with pytest.raises(ValueError):
            _task(n=6, folds=([0], [1, 2, 3, 4, 5]))

    def test_rows_designators(self):
        t = _task(n=6, folds=([0, 2, 4], [1, 3, 5]))
        assert list(t.rows(None)) == list(range(6))
        assert list(t.rows(1)) == [1, 3, 5]
        assert list(t.rows(("not", 1))) == [0, 2, 4]
        assert list(t.rows([5, 0])) == [5, 0]

    def test_delta_outcome(self):
        y = np.array([[1.0, 4.0], [2.0, 2.5]])
        t = TaskDataset(0, y, np.array([1.0, 0.0]), np.zeros((2, 1)))
        np.testing.assert_allclose(t.delta_outcome, [3.0, 0.5])


class TestSplit:
    def test_even(self):
        s = split_dataset(_task(n=10), 2, RngHandle(1))
        assert sorted(len(f) for f in s.folds) == [5, 5]

    def test_odd(self):
        s = split_dataset(_task(n=11), 2, RngHandle(1))
        assert sorted(len(f) for f in s.folds) == [5, 6]

    def test_deterministic(self):
        a = split_dataset(_task(n=11), 2, RngHandle(9, 3))
        b = split_dataset(_task(n=11), 2, RngHandle(9, 3))
        assert all(np.array_equal(x, y) for x, y in zip(a.folds, b.folds))

    def test_too_few(self):
        with pytest.raises(TooFewObservations):
            split_dataset(_task(n=5), 3, RngHandle(0))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(4, 60), st.integers(2, 4), st.integers(0, 1000))
    def test_is_partition(self, n, R, seed):
        if n < 2 * R:
            return
        s = split_dataset(_task(n=n), R, RngHandle(seed))
        allrows = np.concatenate(s.folds)
        assert sorted(allrows.tolist()) == list(range(n))
        sizes = [len(f) for f in s.folds]
        assert max(sizes) - min(sizes) <= 1
