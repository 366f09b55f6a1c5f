import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthofuse.core import TaskDataset
from orthofuse.nuisance import NuisanceLearnerSpec
from orthofuse.weights import FusionHyperparams, compute_weights, fit_pilot, uniform_penalty

HP = FusionHyperparams()


class TestComputeWeights:
    def test_boundary_weight_is_floored(self):
        pen = compute_weights([0.0, 0.1], HP)
        assert pen.values[0, 1] == HP.eps_n
        assert pen.provenance[0, 1] == "floor"

    def test_close_pilots_get_adaptive_weight(self):
        pen = compute_weights([0.0, 0.01], HP)
        assert pen.values[0, 1] == pytest.approx(1000.0, rel=1e-12)
        assert pen.provenance[0, 1] == "adaptive"

    def test_coincident_pilots_capped(self):
        pen = compute_weights([0.3, 0.3], HP)
        assert pen.values[0, 1] == HP.w_cap

    def test_three_task_toy(self):
        pen = compute_weights([0.0, 0.01, 1.0], HP)
        rows = {(j, k): (lam, prov) for j, k, lam, prov in pen.rows()}
        assert rows[(0, 1)][0] == pytest.approx(1000.0) and rows[(0, 1)][1] == "adaptive"
        assert rows[(0, 2)] == (1e-12, "floor")
        assert rows[(1, 2)] == (1e-12, "floor")

    def test_vector_pilots_use_euclidean_distance(self):
        pen = compute_weights([[0.0, 0.0], [0.03, 0.04]], HP)
        assert pen.values[0, 1] == pytest.approx(0.1 / 0.05**2)

    def test_single_task_rejected(self):
        with pytest.raises(ValueError):
            compute_weights([1.0], HP)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=8))
    def test_structure(self, pilots):
        pen = compute_weights(pilots, HP)
        V = pen.values
        np.testing.assert_array_equal(V, V.T)
        assert np.all(np.diag(V) == 0)
        off = V[~np.eye(len(pilots), dtype=bool)]
        assert np.all((off == HP.eps_n) | ((off > HP.tau) & (off <= HP.w_cap)))
        prov = pen.provenance[~np.eye(len(pilots), dtype=bool)]
        np.testing.assert_array_equal(prov == "floor", off == HP.eps_n)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-4, 1.0), st.floats(0.01, 1.0))
    def test_monotone_in_distance(self, d, shrink):
        far = compute_weights([0.0, d], HP).values[0, 1]
        near = compute_weights([0.0, d * shrink], HP).values[0, 1]
        assert near >= far

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 0.09), st.floats(0.2, 1.0))
    def test_scale_covariance(self, d, s):
        w1 = compute_weights([0.0, d], HP).values[0, 1]
        w2 = compute_weights([0.0, s * d], HP).values[0, 1]
        assert w1 > HP.tau and w2 > HP.tau
        assert w2 == pytest.approx(w1 * s ** (-HP.gamma), rel=1e-12)

    def test_hyperparameter_validation(self):
        with pytest.raises(ValueError):
            FusionHyperparams(eps_n=20.0)
        with pytest.raises(ValueError):
            FusionHyperparams(gamma=0.0)


class TestUniformPenalty:
    def test_zero(self):
        assert not uniform_penalty(4, 0.0).values.any()

    def test_three_pairs(self):
        rows = uniform_penalty(3, 5.0).rows()
        assert len(rows) == 3 and all(r[2] == 5.0 and r[3] == "uniform" for r in rows)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            uniform_penalty(3, -1.0)


class _Const:
    def __init__(self, v):
        self.v = v

    def predict(self, X):
        return np.full(len(X), self.v)


class TestPilot:
    def test_plm_interpolation(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(60, 2))
        t = rng.normal(size=60)
        task = TaskDataset(0, 1.3 * t, t, X)
        pilot = fit_pilot(task, "plm", NuisanceLearnerSpec("constant"))
        # constant learners center both sides, which keeps the exact linear relation
        np.testing.assert_allclose(pilot, [1.3], atol=1e-12)

    def test_ate_constant_pseudo_outcome(self):
        rng = np.random.default_rng(1)
        n = 200
        X = rng.normal(size=(n, 2))
        D = np.tile([0.0, 1.0], n // 2)
        Y = 0.7 * D + 2.0
        pilot = fit_pilot(TaskDataset(0, Y, D, X), "ate", NuisanceLearnerSpec("constant"))
        np.testing.assert_allclose(pilot, [0.7], atol=1e-12)

    def test_did_toy(self, monkeypatch):
        import orthofuse.weights as w

        y = np.array([[0.0, 3.0], [0.0, 1.0], [0.0, 3.0], [0.0, 1.0]])
        task = TaskDataset(0, y, np.array([1.0, 0.0, 1.0, 0.0]), np.zeros((4, 1)))
        monkeypatch.setattr(w, "fit_task_nuisances", lambda *a, **k: {"pi": _Const(0.5), "m": _Const(0.0)})
        np.testing.assert_allclose(fit_pilot(task, "did", NuisanceLearnerSpec()), [2.0])

    def test_too_few_rows(self):
        task = TaskDataset(0, np.ones(3), np.array([0.0, 1.0, 2.0]), np.zeros((3, 1)))
        with pytest.raises(ValueError):
            fit_pilot(task, "plm", NuisanceLearnerSpec("constant"))
