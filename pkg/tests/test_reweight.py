import numpy as np
import pytest

from dabench import errors, kernels
from dabench.reweight import (
    density_ratio_weights,
    kliep_weights,
    kmm_objective,
    kmm_weights,
    mmd_target_shift_weights,
    mmd_tars_objective,
)

RNG = np.random.default_rng(0)


def identical_domain_cases():
    X = np.random.default_rng(42).normal(0, 1, (200, 2))
    return [
        ("kde", lambda: density_ratio_weights("kde", X, X.copy(), bandwidth=0.5)),
        ("gaussian", lambda: density_ratio_weights("gaussian", X, X.copy())),
        ("discriminative",
         lambda: density_ratio_weights("discriminative", X, X.copy())),
        ("nearest-neighbor",
         lambda: density_ratio_weights("nearest-neighbor", X, X.copy())),
        ("kliep", lambda: kliep_weights(X, X.copy(), gamma=0.005, seed=0)),
        ("kmm", lambda: kmm_weights(X, X.copy(), gamma=1.0)),
        ("mmdtars", lambda: mmd_target_shift_weights(
            X, np.arange(200) % 2, X.copy(), gamma=1.0)),
    ]


@pytest.mark.parametrize("name,factory", identical_domain_cases(),
                         ids=[c[0] for c in identical_domain_cases()])
def test_identical_domains_near_uniform(name, factory):
    w = factory()
    assert np.abs(w.values - 1.0).max() < 0.1
    assert w.values.mean() == pytest.approx(1.0, abs=1e-9)
    assert np.all(w.values >= 0)


class TestDensityRatio:
    def test_gaussian_closed_form_oracle(self):
        # source N(0,1), target N(1,1): w(x) proportional to exp(x - 1/2)
        rng = np.random.default_rng(1)
        Xs = rng.normal(0, 1, (30000, 1))
        Xt = rng.normal(1, 1, (30000, 1))
        w = density_ratio_weights("gaussian", Xs, Xt)
        ideal = np.clip(np.exp(Xs[:, 0] - 0.5), 1e-6, 1e6)
        ideal /= ideal.mean()
        q = np.linspace(0.1, 0.9, 9)
        rel = np.abs(np.quantile(w.values, q) - np.quantile(ideal, q))
        rel /= np.quantile(ideal, q)
        assert rel.max() < 0.05

    def test_kde_bandwidth_rules(self):
        rng = np.random.default_rng(2)
        Xs, Xt = rng.normal(0, 1, (50, 2)), rng.normal(0.5, 1, (60, 2))
        for bw in ("scott", "silverman", 0.5):
            w = density_ratio_weights("kde", Xs, Xt, bandwidth=bw)
            assert np.isfinite(w.values).all()

    def test_discriminative_rejects_xgb(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(30, 2))
        with pytest.raises(errors.ConfigError, match="XGBoost"):
            density_ratio_weights("discriminative", X, X, domain_classifier="XGB")

    def test_nn_counts(self):
        Xs = np.array([[0.0], [10.0]])
        Xt = np.array([[0.1], [0.2], [9.9]])
        w = density_ratio_weights("nearest-neighbor", Xs, Xt)
        # counts (2, 1) -> mean-one (4/3, 2/3)
        assert np.allclose(w.values, [4 / 3, 2 / 3])
        w2 = density_ratio_weights("nearest-neighbor", Xs, Xt,
                                   laplace_smoothing=True)
        assert np.allclose(w2.values, [1.2, 0.8])


class TestKliep:
    def test_two_point_toy(self):
        # single center at x=1 with a sharp kernel: weight concentrates there
        w = kliep_weights(np.array([[0.0], [1.0]]), np.array([[1.0]]),
                          gamma=50.0, n_centers=1, seed=0)
        assert w.values[1] == pytest.approx(2.0, abs=1e-3)
        assert w.values[0] == pytest.approx(0.0, abs=1e-3)

    def test_mean_one_residual(self):
        rng = np.random.default_rng(4)
        for seed in range(3):
            Xs = rng.normal(0, 1, (60, 2))
            Xt = rng.normal(0.4, 1.2, (70, 2))
            w = kliep_weights(Xs, Xt, gamma=0.5, seed=seed)
            assert abs(w.values.mean() - 1.0) <= 1e-6

    def test_responds_to_shift(self):
        rng = np.random.default_rng(5)
        Xs = rng.normal(0, 1, (300, 1))
        Xt = rng.normal(1, 1, (300, 1))
        w = kliep_weights(Xs, Xt, gamma=0.5, seed=0)
        assert np.corrcoef(Xs[:, 0], w.values)[0, 1] > 0.5

    def test_gamma_list_cross_validates(self):
        rng = np.random.default_rng(6)
        Xs = rng.normal(0, 1, (80, 2))
        Xt = rng.normal(0.5, 1, (80, 2))
        w = kliep_weights(Xs, Xt, gamma=[0.01, 0.1, 1.0], cv=3, seed=0)
        assert np.isfinite(w.values).all()


class TestKMM:
    def test_box_and_mean_constraints(self):
        rng = np.random.default_rng(7)
        Xs = rng.normal(0, 1, (40, 2))
        Xt = rng.normal(0.8, 1, (50, 2))
        B = 3.0
        w = kmm_weights(Xs, Xt, gamma=0.5, B=B)
        # returned weights are mean-one; the raw iterate satisfied the box,
        # and renormalization divides by a mean within [1-eps, 1+eps]
        eps = B / np.sqrt(40)
        assert np.all(w.values >= 0)
        assert w.values.max() <= B / max(1e-9, 1 - eps) + 1e-9

    def test_brute_force_qp_oracle(self):
        # n_s = 3 in 1-D: exhaustive scan of the feasible box at step 0.01
        Xs = np.array([[0.0], [0.6], [1.4]])
        Xt = np.array([[0.5], [0.7], [1.0], [1.2]])
        gamma, B = 1.0, 2.0
        K = kernels.rbf_kernel(Xs, Xs, gamma)
        kappa = (3 / 4) * kernels.rbf_kernel(Xs, Xt, gamma).sum(axis=1)
        eps = B / np.sqrt(3)
        grid = np.round(np.arange(0.0, B + 1e-9, 0.01), 10)
        best, best_w = np.inf, None
        W2, W3 = np.meshgrid(grid, grid, indexing="ij")
        for w1 in grid:
            tot = w1 + W2 + W3
            feasible = np.abs(tot / 3.0 - 1.0) <= eps
            obj = (0.5 * (K[0, 0] * w1 ** 2 + K[1, 1] * W2 ** 2
                          + K[2, 2] * W3 ** 2)
                   + K[0, 1] * w1 * W2 + K[0, 2] * w1 * W3 + K[1, 2] * W2 * W3
                   - (kappa[0] * w1 + kappa[1] * W2 + kappa[2] * W3))
            obj = np.where(feasible, obj, np.inf)
            ix = np.unravel_index(np.argmin(obj), obj.shape)
            if obj[ix] < best:
                best, best_w = obj[ix], np.array([w1, grid[ix[0]], grid[ix[1]]])
        w = kmm_weights(Xs, Xt, gamma=gamma, B=B)
        brute_mean_one = best_w / best_w.mean()
        assert np.abs(w.values - brute_mean_one).max() < 0.02

    def test_no_worse_than_uniform(self):
        rng = np.random.default_rng(8)
        for seed in range(3):
            Xs = rng.normal(0, 1, (30, 2))
            Xt = rng.normal(0.5, 1.3, (40, 2))
            gamma = 0.7
            K = kernels.rbf_kernel(Xs, Xs, gamma)
            kappa = (30 / 40) * kernels.rbf_kernel(Xs, Xt, gamma).sum(axis=1)
            w = kmm_weights(Xs, Xt, gamma=gamma, B=5.0)
            assert kmm_objective(w.values, K, kappa) <= \
                kmm_objective(np.ones(30), K, kappa) + 1e-9


class TestMMDTarS:
    def test_recovers_imbalanced_proportions(self):
        # brute-force simplex scan at step 0.01 agrees and lands near truth
        rng = np.random.default_rng(9)
        Xs = np.vstack([rng.normal(-2, 1, (100, 1)), rng.normal(2, 1, (100, 1))])
        ys = np.array([0] * 100 + [1] * 100)
        n1 = int(0.8 * 300)
        Xt = np.vstack([rng.normal(-2, 1, (n1, 1)),
                        rng.normal(2, 1, (300 - n1, 1))])
        w = mmd_target_shift_weights(Xs, ys, Xt, gamma=0.5, reg=1e-6)
        beta = w.class_proportions
        assert abs(beta[0] - 0.8) < 0.1

        K_ss = kernels.rbf_kernel(Xs, Xs, 0.5)
        K_st = kernels.rbf_kernel(Xs, Xt, 0.5)
        masks = [ys == 0, ys == 1]
        G = np.array([[K_ss[np.ix_(a, b)].mean() for b in masks] for a in masks])
        h = np.array([K_st[m].mean() for m in masks])
        grid = np.arange(0, 1.0 + 1e-9, 0.01)
        objs = [mmd_tars_objective(np.array([b, 1 - b]), G, h, 1e-6)
                for b in grid]
        brute = grid[int(np.argmin(objs))]
        assert abs(beta[0] - brute) < 0.02

    def test_matched_proportions_near_uniform(self):
        rng = np.random.default_rng(10)
        Xs = np.vstack([rng.normal(-2, 1, (60, 1)), rng.normal(2, 1, (60, 1))])
        ys = np.array([0] * 60 + [1] * 60)
        Xt = np.vstack([rng.normal(-2, 1, (60, 1)), rng.normal(2, 1, (60, 1))])
        w = mmd_target_shift_weights(Xs, ys, Xt, gamma=0.5)
        assert np.abs(w.values - 1).max() < 0.15

    def test_paper_grid_gamma_none_is_median_heuristic(self):
        rng = np.random.default_rng(11)
        Xs = np.vstack([rng.normal(-2, 1, (30, 1)), rng.normal(2, 1, (30, 1))])
        ys = np.array([0] * 30 + [1] * 30)
        w = mmd_target_shift_weights(Xs, ys, Xs.copy(), gamma=None)
        assert np.isfinite(w.values).all()
