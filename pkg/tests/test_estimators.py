import numpy as np
import pytest

from dabench import errors
from dabench.core import stratified_split, DomainDataset
from dabench.estimators import (
    EstimatorSpec,
    default_candidates,
    fit_estimator,
    fit_kernel_logistic,
    fit_linear_logistic,
    fit_soft_targets,
    ridge_softmax_objective,
    select_base_estimator,
)


def blobs(rng, n=50, gap=2.0):
    X = np.vstack([rng.normal(-gap, 1, (n, 1)), rng.normal(gap, 1, (n, 1))])
    y = np.array([0] * n + [1] * n)
    return X, y


class TestLinearLogistic:
    def test_separable_blobs(self):
        rng = np.random.default_rng(0)
        X, y = blobs(rng, gap=4.0)
        pred = fit_linear_logistic(X, y, l2=1e-4)
        assert np.mean(pred.predict(X) == y) == 1.0

    def test_duplicate_equals_double_weight(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 2))
        y = (X[:, 0] + X[:, 1] > 0).astype(int)
        dup = fit_linear_logistic(np.vstack([X, X]), np.concatenate([y, y]),
                                  l2=0.1)
        weighted = fit_linear_logistic(X, y, w=2 * np.ones(30), l2=0.1)
        Xq = rng.normal(size=(20, 2))
        gap = np.abs(dup.decision_function(Xq) - weighted.decision_function(Xq))
        assert gap.max() < 1e-8

    def test_zero_weights_rejected(self):
        rng = np.random.default_rng(2)
        X, y = blobs(rng)
        with pytest.raises(errors.DegenerateWeights):
            fit_linear_logistic(X, y, w=np.zeros(len(y)))

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(3)
        X, y = blobs(rng)
        w = rng.random(len(y)) + 0.5
        a = fit_linear_logistic(X, y, w=w, l2=0.5)
        b = fit_linear_logistic(X, y, w=17.3 * w, l2=0.5)
        assert np.abs(a.coef - b.coef).max() < 1e-6

    def test_single_class_and_nonfinite(self):
        X = np.zeros((4, 1))
        with pytest.raises(errors.SingleClass):
            fit_linear_logistic(X, [1, 1, 1, 1])
        with pytest.raises(errors.NonFiniteInput):
            fit_linear_logistic(np.array([[np.inf], [0.0]]), [0, 1])


class TestKernelLogistic:
    def test_xor_kernel_beats_linear(self):
        rng = np.random.default_rng(4)
        X = rng.normal(0, 1, (200, 2))
        y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
        lin = fit_linear_logistic(X, y, l2=1e-3)
        ker = fit_kernel_logistic(X, y, gamma=1.0, l2=1e-3)
        assert np.mean(ker.predict(X) == y) >= 0.95
        assert np.mean(lin.predict(X) == y) <= 0.6

    def test_tiny_gamma_approaches_class_priors(self):
        rng = np.random.default_rng(5)
        X, y = blobs(rng, n=40)
        w = np.concatenate([np.ones(40), 3 * np.ones(40)])  # priors 1:3
        pred = fit_kernel_logistic(X, y, w=w, gamma=1e-10, l2=1e-6)
        P = pred.predict_proba(X).probabilities
        assert np.abs(P[:, 1] - 0.75).max() < 0.05

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(50, 3))
        y = rng.integers(0, 3, size=50)
        pred = fit_kernel_logistic(X, y, gamma=0.5, l2=1e-2)
        P = pred.predict_proba(rng.normal(size=(30, 3))).probabilities
        assert np.abs(P.sum(axis=1) - 1).max() < 1e-9

    def test_gradient_matches_finite_differences(self):
        # acceptance: analytic gradient vs central differences, 1e-5 relative
        rng = np.random.default_rng(7)
        X = rng.normal(size=(12, 3))
        y = rng.integers(0, 3, size=12)
        Y = np.zeros((12, 3))
        Y[np.arange(12), y] = 1.0
        WY = Y * (rng.random(12) + 0.5)[:, None] / 12
        vec = rng.normal(size=(3 * 3 + 3)) * 0.3
        _, grad = ridge_softmax_objective(vec, X, WY, l2=0.2)
        fd = np.zeros_like(vec)
        eps = 1e-6
        for i in range(vec.size):
            up, down = vec.copy(), vec.copy()
            up[i] += eps
            down[i] -= eps
            fd[i] = (ridge_softmax_objective(up, X, WY, 0.2)[0]
                     - ridge_softmax_objective(down, X, WY, 0.2)[0]) / (2 * eps)
        rel = np.abs(grad - fd).max() / max(np.abs(fd).max(), 1e-12)
        assert rel < 1e-5


class TestSoftTargets:
    def test_soft_equals_hard_for_onehot(self):
        rng = np.random.default_rng(8)
        X, y = blobs(rng, n=25)
        spec = EstimatorSpec("linear-logistic", {"l2": 0.1})
        hard = fit_estimator(spec, X, y)
        Y = np.zeros((50, 2))
        Y[np.arange(50), y] = 1.0
        soft = fit_soft_targets(spec, X, Y, np.ones(50), np.array([0, 1]))
        assert np.abs(hard.coef - soft.coef).max() < 1e-6


class TestSelection:
    def test_linear_wins_on_separable(self):
        rng = np.random.default_rng(9)
        X, y = blobs(rng, n=60, gap=3.0)
        ds = DomainDataset(
            features=np.vstack([X, X[:4]]), labels=np.concatenate([y, y[:4]]),
            domain=np.array([1] * 120 + [-1] * 4),
        )
        splits = stratified_split(ds.source_labels, 0.8, 3, seed=0)
        spec = select_base_estimator(ds, default_candidates(), splits)
        assert spec.kind == "linear-logistic"

    def test_kernel_wins_on_rings(self):
        rng = np.random.default_rng(10)
        r_in = rng.normal(0, 0.3, (80, 2))
        theta = rng.uniform(0, 2 * np.pi, 80)
        r_out = np.stack([(2.5 + rng.normal(0, 0.2, 80)) * np.cos(theta),
                          (2.5 + rng.normal(0, 0.2, 80)) * np.sin(theta)], axis=1)
        X = np.vstack([r_in, r_out])
        y = np.array([0] * 80 + [1] * 80)
        ds = DomainDataset(
            features=np.vstack([X, X[:4]]), labels=np.concatenate([y, y[:4]]),
            domain=np.array([1] * 160 + [-1] * 4),
        )
        splits = stratified_split(ds.source_labels, 0.8, 3, seed=0)
        spec = select_base_estimator(ds, default_candidates(), splits)
        assert spec.kind == "kernel-logistic"

    def test_single_candidate_identity(self):
        rng = np.random.default_rng(11)
        X, y = blobs(rng, n=20)
        ds = DomainDataset(
            features=np.vstack([X, X[:4]]), labels=np.concatenate([y, y[:4]]),
            domain=np.array([1] * 40 + [-1] * 4),
        )
        only = EstimatorSpec("linear-logistic", {"l2": 0.37})
        splits = stratified_split(ds.source_labels, 0.8, 2, seed=0)
        assert select_base_estimator(ds, [only], splits) == only

    def test_empty_grid(self):
        ds = DomainDataset(features=np.zeros((4, 1)), labels=[0, 1, 0, 1],
                           domain=[1, 1, -1, -1])
        with pytest.raises(errors.EmptyGrid):
            select_base_estimator(ds, [], None)

    def test_xgboost_rejected(self):
        with pytest.raises(errors.ConfigError, match="XGBoost"):
            EstimatorSpec("xgboost", {})
