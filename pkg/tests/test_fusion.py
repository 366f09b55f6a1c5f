import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import scalar_fused_oracle
from orthofuse.errors import ConvergenceWarning, SingularSystem
from orthofuse.fusion import (
    SolverConfig,
    consensus_snap,
    extract_partition,
    fused_objective,
    group_soft_threshold,
    refit_clusters,
    solve_fused,
)
from orthofuse.losses import QuadraticLoss
from orthofuse.weights import compute_weights, uniform_penalty


def centered(b, a=1.0):
    """Loss a * (theta - b)^2 as a quadratic."""
    return QuadraticLoss([[a]], [a * b], a * b * b, 1)


class TestGroupSoftThreshold:
    def test_inside_ball(self):
        np.testing.assert_array_equal(group_soft_threshold([3.0, 4.0], 10.0), [0.0, 0.0])

    def test_shrinks(self):
        np.testing.assert_allclose(group_soft_threshold([3.0, 4.0], 2.5), [1.5, 2.0])

    def test_identity_at_zero(self):
        np.testing.assert_array_equal(group_soft_threshold([3.0, -4.0], 0.0), [3.0, -4.0])

    def test_rowwise(self):
        out = group_soft_threshold(np.array([[3.0, 4.0], [0.3, 0.4]]), np.array([2.5, 1.0]))
        np.testing.assert_allclose(out, [[1.5, 2.0], [0.0, 0.0]])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=4), st.floats(0, 10))
    def test_subgradient_optimality(self, v, kappa):
        v = np.array(v)
        z = group_soft_threshold(v, kappa)
        r = v - z  # must be a subgradient of kappa*|.| at z
        if np.linalg.norm(z) > 0:
            np.testing.assert_allclose(r, kappa * z / np.linalg.norm(z), atol=1e-9)
        else:
            assert np.linalg.norm(r) <= kappa + 1e-12


class TestSolveFusedExamples:
    losses = [centered(0.0), centered(1.0)]

    def test_decoupled(self):
        sol = solve_fused(self.losses, uniform_penalty(2, 0.0))
        np.testing.assert_allclose(sol.theta_hat[:, 0], [0.0, 1.0], atol=1e-10)
        assert sol.partition == [(0,), (1,)]

    def test_forced_consensus(self):
        sol = solve_fused(self.losses, uniform_penalty(2, 100.0))
        np.testing.assert_allclose(sol.theta_hat[:, 0], [0.5, 0.5], atol=1e-12)
        assert sol.partition == [(0, 1)]

    def test_partial_shrinkage(self):
        sol = solve_fused(self.losses, uniform_penalty(2, 0.4))
        np.testing.assert_allclose(sol.theta_hat[:, 0], [0.2, 0.8], atol=1e-6)
        assert len(sol.partition) == 2

    def test_three_task_adaptive(self):
        b = [0.0, 0.01, 1.0]
        sol = solve_fused([centered(v) for v in b], compute_weights(b))
        assert sol.partition == [(0, 1), (2,)]
        assert sol.theta_hat[0, 0] == sol.theta_hat[1, 0]
        lam = compute_weights(b).values
        oracle_val, _ = scalar_fused_oracle([1, 1, 1], b, np.square(b), lam)
        assert sol.objective_value <= oracle_val + 1e-6 * (1 + abs(oracle_val))

    def test_single_task(self):
        sol = solve_fused([centered(2.0)], uniform_penalty(1, 0.0))
        np.testing.assert_allclose(sol.theta_hat, [[2.0]])
        assert sol.converged and sol.partition == [(0,)]

    def test_negative_penalty_rejected(self):
        with pytest.raises(ValueError):
            solve_fused(self.losses, np.array([[0.0, -1.0], [-1.0, 0.0]]))

    def test_iteration_cap_warns(self):
        b = np.linspace(0, 3, 6)
        cfg = SolverConfig(max_iter=3, residual_balance=False)
        with pytest.warns(ConvergenceWarning):
            sol = solve_fused([centered(v) for v in b], uniform_penalty(6, 0.3), cfg)
        assert not sol.converged and sol.iterations == 3


class TestSolverProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 4), st.integers(0, 2**31))
    def test_oracle_equivalence(self, m, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(0.5, 4, m)
        b = rng.normal(size=m) * a
        c = np.zeros(m)
        lam = np.triu(rng.uniform(0, 5, (m, m)), 1)
        lam = lam + lam.T
        sol = solve_fused([QuadraticLoss([[a[j]]], [b[j]], 0.0, 1) for j in range(m)], lam)
        val, _ = scalar_fused_oracle(a, b, c, lam)
        assert sol.objective_value <= val + 1e-5

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(2, 6), st.integers(0, 2**31))
    def test_zero_penalty_gives_task_minimizers(self, d, m, seed):
        rng = np.random.default_rng(seed)
        losses = []
        for _ in range(m):
            G = rng.normal(size=(d + 3, d))
            losses.append(QuadraticLoss(G.T @ G, rng.normal(size=d), 0.0, 1))
        sol = solve_fused(losses, uniform_penalty(m, 0.0))
        expected = np.array([f.minimizer() for f in losses])
        assert np.max(np.abs(sol.theta_hat - expected)) <= 1e-8

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        b = np.concatenate([rng.normal(0, 0.01, 4), rng.normal(1, 0.01, 4)])
        losses = [centered(v, 2.0) for v in b]
        sol = solve_fused(losses, compute_weights(b))
        perm = rng.permutation(len(b))
        sol_p = solve_fused([losses[j] for j in perm], compute_weights(b[perm]))
        np.testing.assert_allclose(sol_p.theta_hat, sol.theta_hat[perm], atol=1e-6)
        mapped = sorted(tuple(sorted(perm[list(g)])) for g in sol_p.partition)
        assert mapped == sorted(sol.partition)

    def test_incumbent_non_increasing(self):
        rng = np.random.default_rng(2)
        b = rng.normal(size=6)
        sol = solve_fused([centered(v) for v in b], uniform_penalty(6, 0.3))
        assert np.all(np.diff(sol.history) <= 0)

    def test_vector_parameters(self):
        losses = [QuadraticLoss(np.eye(2), [0.0, 0.0], 0.0, 1), QuadraticLoss(np.eye(2), [1.0, 1.0], 2.0, 1)]
        sol = solve_fused(losses, uniform_penalty(2, 100.0))
        np.testing.assert_allclose(sol.theta_hat, [[0.5, 0.5], [0.5, 0.5]], atol=1e-10)

    def test_objective_matches_definition(self):
        b = [0.0, 0.3, 2.0]
        lam = uniform_penalty(3, 0.2)
        sol = solve_fused([centered(v) for v in b], lam)
        assert sol.objective_value == pytest.approx(fused_objective([centered(v) for v in b], lam, sol.theta_hat))

    def test_consensus_snap_exact(self):
        rng = np.random.default_rng(3)
        b = np.concatenate([rng.normal(-1, 0.02, 5), rng.normal(1, 0.02, 5)])
        sol = solve_fused([centered(v) for v in b], compute_weights(b))
        for g in sol.partition:
            vals = sol.theta_hat[list(g), 0]
            assert np.ptp(vals) == 0.0


class TestPartition:
    def test_all_fused(self):
        edges = np.array([[0, 1], [0, 2], [1, 2]])
        assert extract_partition([1.0, 1.0, 1.0], edges, [True, True, True]) == [(0, 1, 2)]

    def test_none_fused(self):
        edges = np.array([[0, 1], [0, 2], [1, 2]])
        assert extract_partition([1.0, 2.0, 3.0], edges, [False] * 3) == [(0,), (1,), (2,)]

    def test_chain_is_transitive(self):
        edges = np.array([[0, 1], [0, 2], [1, 2]])
        assert extract_partition([1.0, 1.0, 1.0], edges, [True, False, True]) == [(0, 1, 2)]

    def test_zero_z_but_distant_theta_not_fused(self):
        assert extract_partition([0.0, 1.0], np.array([[0, 1]]), [True]) == [(0,), (1,)]

    def test_z_matrix_input(self):
        z = np.array([[0.0], [0.2], [0.0]])
        edges = np.array([[0, 1], [0, 2], [1, 2]])
        assert extract_partition([1.0, 1.0, 1.0], edges, z) == [(0, 1, 2)]

    def test_snap(self):
        np.testing.assert_allclose(consensus_snap([[1.0], [3.0], [5.0]], [(0, 1), (2,)]), [[2.0], [2.0], [5.0]])


class TestRefit:
    def test_singleton(self):
        np.testing.assert_allclose(refit_clusters([centered(0.3)], [(0,)])[0], [0.3])

    def test_pooled_mean(self):
        np.testing.assert_allclose(refit_clusters([centered(0.0), centered(1.0)], [(0, 1)])[0], [0.5])

    def test_weighted_pool(self):
        f1 = QuadraticLoss([[1.0]], [0.0], 0.0, 1)
        f2 = QuadraticLoss([[3.0]], [3.0], 0.0, 1)
        np.testing.assert_allclose(refit_clusters([f1, f2], [(0, 1)])[0], [0.75])

    def test_singular(self):
        with pytest.raises(SingularSystem):
            refit_clusters([QuadraticLoss([[0.0]], [0.0], 0.0, 1)], [(0,)])

    def test_solver_refit_flag(self):
        sol = solve_fused([centered(0.0), centered(1.0, 3.0)], uniform_penalty(2, 100.0), SolverConfig(refit=True))
        np.testing.assert_allclose(sol.refit, [[0.75]])
