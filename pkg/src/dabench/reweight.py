"""Importance weights for source samples.

Density-ratio style weights (KDE, Gaussian, discriminative, nearest
neighbor), KLIEP, kernel mean matching, and MMD-based class-proportion
weights for target shift.  All weights come back nonnegative, finite and
normalized to mean one; raw ratios are clipped to [1e-6, 1e6] before
normalization so a vanishing source density cannot destroy downstream
fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import errors, kernels

RATIO_CLIP = (1e-6, 1e6)

DENSITY_RATIO_KINDS = ("kde", "gaussian", "discriminative", "nearest-neighbor")


@dataclass(frozen=True)
class SampleWeights:
    """Nonnegative source-sample weights, normalized to mean one."""

    values: np.ndarray
    normalization: str = "mean-one"
    flags: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise errors.NonFiniteInput("weights must be finite and nonnegative")
        if abs(v.mean() - 1.0) > 1e-9:
            raise errors.InvalidSpec("weights must average to one")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def _normalize(raw, flags=()):
    raw = np.clip(np.asarray(raw, dtype=np.float64), *RATIO_CLIP)
    return SampleWeights(values=raw / raw.mean(), flags=tuple(flags))


def _kde_bandwidth(X, bandwidth):
    n, d = X.shape
    if bandwidth == "scott":
        return n ** (-1.0 / (d + 4))
    if bandwidth == "silverman":
        return (n * (d + 2) / 4.0) ** (-1.0 / (d + 4))
    bandwidth = float(bandwidth)
    if bandwidth <= 0:
        raise errors.InvalidSpec("KDE bandwidth must be positive")
    return bandwidth


def _kde_logpdf(train, query, h):
    d = train.shape[1]
    D = kernels.squared_distances(query, train)
    expo = -0.5 * D / h ** 2
    m = expo.max(axis=1)
    log_mean = m + np.log(np.mean(np.exp(expo - m[:, None]), axis=1))
    return log_mean - 0.5 * d * np.log(2.0 * np.pi * h ** 2)


def _gaussian_logpdf(X, query, ridge_rule="auto"):
    mu = X.mean(axis=0)
    Xc = X - mu
    S = Xc.T @ Xc / X.shape[0]
    if ridge_rule == "auto":
        S = S + (1e-6 * float(np.trace(S)) / S.shape[0] + 1e-12) * np.eye(S.shape[0])
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise errors.SingularCovariance(
            "covariance is singular even after the automatic ridge"
        )
    sol = np.linalg.solve(L, (query - mu).T)
    maha = np.sum(sol ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    d = X.shape[1]
    return -0.5 * (maha + logdet + d * np.log(2.0 * np.pi))


def density_ratio_weights(kind, Xs, Xt, bandwidth=1.0, reg="auto",
                          domain_classifier="LR", laplace_smoothing=False,
                          seed=0) -> SampleWeights:
    """Plug-in estimates of the target/source density ratio at the source points.

    ``kind`` selects the estimator:

    * ``"kde"`` - Gaussian kernel density estimates per domain
      (``bandwidth`` is a float or the ``'scott'`` / ``'silverman'`` rule);
    * ``"gaussian"`` - full-covariance Gaussian fits (``reg='auto'`` adds a
      trace-scaled ridge);
    * ``"discriminative"`` - probability ratio of a source-vs-target domain
      classifier (``'LR'`` linear or ``'SVC'`` RBF-kernel logistic);
    * ``"nearest-neighbor"`` - per-source-point count of target points whose
      nearest source point it is, optionally Laplace-smoothed.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    if Xs.shape[1] != Xt.shape[1]:
        raise errors.LengthMismatch("source/target dimensionality mismatch")
    if kind == "kde":
        h = _kde_bandwidth(Xs, bandwidth)
        log_ratio = _kde_logpdf(Xt, Xs, h) - _kde_logpdf(Xs, Xs, h)
        return _normalize(np.exp(np.clip(log_ratio, -50, 50)))
    if kind == "gaussian":
        log_ratio = _gaussian_logpdf(Xt, Xs, reg) - _gaussian_logpdf(Xs, Xs, reg)
        return _normalize(np.exp(np.clip(log_ratio, -50, 50)))
    if kind == "discriminative":
        return _discriminative_weights(Xs, Xt, domain_classifier, query=Xs)
    if kind == "nearest-neighbor":
        tree = cKDTree(Xs)
        _, nearest = tree.query(Xt, k=1)
        counts = np.bincount(nearest, minlength=Xs.shape[0]).astype(np.float64)
        if laplace_smoothing:
            counts += 1.0
        return _normalize(counts)
    raise errors.InvalidSpec(f"kind must be one of {DENSITY_RATIO_KINDS}")


def _discriminative_weights(Xs, Xt, domain_classifier, query) -> SampleWeights:
    from .estimators import PROB_FLOOR, fit_kernel_logistic, fit_linear_logistic

    X = np.vstack([Xs, Xt])
    y = np.concatenate([np.zeros(Xs.shape[0], int), np.ones(Xt.shape[0], int)])
    try:
        if str(domain_classifier).upper() == "LR":
            clf = fit_linear_logistic(X, y, l2=1e-3)
        elif str(domain_classifier).upper() == "SVC":
            clf = fit_kernel_logistic(X, y, gamma="scale", l2=1e-3)
        else:
            raise errors.ConfigError(
                f"domain classifier {domain_classifier!r} is not supported "
                "(XGBoost is out of scope); use 'LR' or 'SVC'"
            )
        proba = clf.predict_proba(query).probabilities
    except errors.ConfigError:
        raise
    except errors.DABenchError as exc:
        raise errors.DomainClassifierFailed(str(exc))
    p_target = np.maximum(proba[:, 1], PROB_FLOOR)
    p_source = np.maximum(proba[:, 0], PROB_FLOOR)
    # the prior ratio n_s/n_t is a constant wiped out by normalization
    return _normalize(p_target / p_source)


def _kliep_log_likelihood(alpha, Phi_t):
    act = Phi_t @ alpha
    if np.any(act <= 0):
        return -np.inf
    return float(np.sum(np.log(act)))


def kliep_weights(Xs, Xt, gamma=1.0, n_centers=100, tol=1e-6, max_iter=1000,
                  cv=5, seed=0) -> SampleWeights:
    """Kullback-Leibler importance estimation by projected gradient ascent.

    Maximizes the target log-likelihood of the kernel model
    ``w(x) = sum_c alpha_c k(x, c)`` subject to ``alpha >= 0`` and the
    mean of ``w`` over the source being one.  Centers are drawn from the
    target with a fixed seed (at most ``n_centers``).  When ``gamma`` is a
    list, the bandwidth is chosen by ``cv``-fold likelihood
    cross-validation over the target sample.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    if isinstance(gamma, (list, tuple)):
        gamma = _kliep_select_gamma(Xs, Xt, list(gamma), n_centers, tol,
                                    max_iter, cv, seed)
    g = kernels.resolve_gamma(gamma, Xs, Xt, seed=seed)
    rng = np.random.default_rng(seed)
    n_cent = min(int(n_centers), Xt.shape[0])
    centers = Xt[rng.choice(Xt.shape[0], size=n_cent, replace=False)]
    alpha, flags = _kliep_solve(Xs, Xt, centers, g, tol, max_iter)
    w = kernels.rbf_kernel(Xs, centers, g) @ alpha
    return _normalize(w, flags)


def _kliep_solve(Xs, Xt, centers, gamma, tol, max_iter):
    Phi_s = kernels.rbf_kernel(Xs, centers, gamma)
    Phi_t = kernels.rbf_kernel(Xt, centers, gamma)
    b = Phi_s.mean(axis=0)
    if np.all(b <= 0) or not np.any(Phi_t.sum(axis=0) > 0):
        raise errors.DegenerateKernel("kernel design matrix is all zero")

    def project(alpha):
        alpha = np.maximum(alpha, 0.0)
        s = b @ alpha
        if s <= 0:
            # restart from the feasible uniform mixture
            alpha = np.ones_like(alpha)
            s = b @ alpha
        return alpha / s

    alpha = project(np.ones(centers.shape[0]))
    obj = _kliep_log_likelihood(alpha, Phi_t)
    step = 1.0
    flags = ("not_converged",)
    for _ in range(int(max_iter)):
        act = Phi_t @ alpha
        grad = Phi_t.T @ (1.0 / np.maximum(act, 1e-300))
        improved = False
        for _ in range(40):
            cand = project(alpha + step * grad)
            cand_obj = _kliep_log_likelihood(cand, Phi_t)
            if cand_obj > obj + 1e-12:
                improved = True
                break
            step *= 0.5
        if not improved:
            flags = ()
            break
        gain = cand_obj - obj
        alpha, obj = cand, cand_obj
        step = min(step * 2.0, 1e8)
        if gain <= tol * max(1.0, abs(obj)):
            flags = ()
            break
    return alpha, flags


def _kliep_select_gamma(Xs, Xt, gammas, n_centers, tol, max_iter, cv, seed):
    rng = np.random.default_rng(seed)
    nt = Xt.shape[0]
    folds = np.array_split(rng.permutation(nt), max(2, int(cv)))
    best = (None, -np.inf)
    for gamma in gammas:
        g = kernels.resolve_gamma(gamma, Xs, Xt, seed=seed)
        scores = []
        for hold in folds:
            mask = np.ones(nt, dtype=bool)
            mask[hold] = False
            if not mask.any() or not (~mask).any():
                continue
            inner_rng = np.random.default_rng(seed)
            fit_t = Xt[mask]
            n_cent = min(int(n_centers), fit_t.shape[0])
            centers = fit_t[inner_rng.choice(fit_t.shape[0], n_cent, replace=False)]
            try:
                alpha, _ = _kliep_solve(Xs, fit_t, centers, g, tol, max_iter)
            except errors.DegenerateKernel:
                scores.append(-np.inf)
                continue
            held = kernels.rbf_kernel(Xt[hold], centers, g) @ alpha
            scores.append(float(np.mean(np.log(np.maximum(held, 1e-300)))))
        mean_score = float(np.mean(scores)) if scores else -np.inf
        if mean_score > best[1]:
            best = (gamma, mean_score)
    return best[0] if best[0] is not None else gammas[0]


def _project_box_mean(v, upper, lo_sum, hi_sum):
    """Euclidean projection onto {0 <= w <= upper, lo_sum <= sum(w) <= hi_sum}."""
    clipped = np.clip(v, 0.0, upper)
    total = clipped.sum()
    if lo_sum <= total <= hi_sum:
        return clipped
    target = lo_sum if total < lo_sum else hi_sum

    def mass(shift):
        return np.clip(v - shift, 0.0, upper).sum()

    lo, hi = -upper, upper + np.max(np.abs(v))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mass(mid) > target:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi), 0.0, upper)


def kmm_objective(w, K, kappa):
    """KMM quadratic ``0.5 w'Kw - kappa'w`` (public so tests can brute-force)."""
    return float(0.5 * w @ (K @ w) - kappa @ w)


def kmm_weights(Xs, Xt, gamma=None, B=1000.0, tol=1e-6, max_iter=1000,
                smooth_weights=False, seed=0) -> SampleWeights:
    """Kernel mean matching by projected gradient descent.

    Minimizes the RKHS distance between the reweighted source mean
    embedding and the target mean embedding, subject to the box
    ``0 <= w <= B`` and ``|mean(w) - 1| <= eps`` with the original recipe
    ``eps = B / sqrt(n_s)``.  ``gamma=None`` uses the median heuristic.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    ns, nt = Xs.shape[0], Xt.shape[0]
    g = kernels.resolve_gamma(gamma, Xs, Xt, seed=seed)
    K = kernels.rbf_kernel(Xs, Xs, g)
    kappa = (ns / nt) * kernels.rbf_kernel(Xs, Xt, g).sum(axis=1)
    eps = float(B) / np.sqrt(ns)
    lo_sum, hi_sum = ns * (1.0 - eps), ns * (1.0 + eps)
    # Lipschitz constant of the gradient = largest eigenvalue of K
    lam = _power_iteration(K, seed)
    step = 1.0 / max(lam, 1e-12)
    w = np.ones(ns)
    obj = kmm_objective(w, K, kappa)
    flags = ("not_converged",)
    for _ in range(int(max_iter)):
        grad = K @ w - kappa
        w_new = _project_box_mean(w - step * grad, float(B), lo_sum, hi_sum)
        new_obj = kmm_objective(w_new, K, kappa)
        if not np.isfinite(new_obj):
            raise errors.NonPSDKernel("KMM objective diverged")
        gain = obj - new_obj
        w = w_new
        obj = new_obj
        if 0 <= gain <= tol * max(1.0, abs(obj)):
            flags = ()
            break
    if smooth_weights:
        w = (K @ w) / np.maximum(K.sum(axis=1), 1e-300)
    if w.mean() <= 0:
        w = np.ones(ns)
        flags = flags + ("degenerate_restart",)
    return SampleWeights(values=w / w.mean(), flags=flags)


def _power_iteration(K, seed, iters=50):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=K.shape[0])
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        v = K @ v
        lam = np.linalg.norm(v)
        if lam <= 0:
            return 1.0
        v /= lam
    return float(lam)


def _project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.flatnonzero(u + (1.0 - css) / (np.arange(len(v)) + 1) > 0)[-1]
    theta = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + theta, 0.0)


def mmd_tars_objective(beta, G, h, reg):
    """Target-shift objective ``||sum_c beta_c mu_c - mu_t||^2 + reg ||beta||^2``
    up to the constant ``||mu_t||^2`` (public so tests can brute-force)."""
    return float(beta @ (G @ beta) - 2.0 * h @ beta + reg * beta @ beta)


def mmd_target_shift_weights(Xs, ys, Xt, gamma=None, reg=1e-6, tol=1e-6,
                             max_iter=1000, seed=0) -> SampleWeights:
    """Class-proportion weights under the target-shift hypothesis.

    Estimates target class proportions ``beta`` on the simplex by matching
    the mixture of per-class source kernel mean embeddings to the target
    embedding, then weights each source sample by
    ``beta[y] / source_class_frequency[y]``.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    classes, counts = np.unique(ys, return_counts=True)
    if np.any(counts == 0) or classes.shape[0] < 1:
        raise errors.EmptyClass("every class needs at least one source sample")
    g = kernels.resolve_gamma(gamma, Xs, Xt, seed=seed)
    K_ss = kernels.rbf_kernel(Xs, Xs, g)
    K_st = kernels.rbf_kernel(Xs, Xt, g)
    C = classes.shape[0]
    G = np.empty((C, C))
    h = np.empty(C)
    masks = [ys == c for c in classes]
    for i, mi in enumerate(masks):
        h[i] = K_st[mi].mean()
        for j, mj in enumerate(masks):
            G[i, j] = K_ss[np.ix_(mi, mj)].mean()
    lam = float(np.linalg.eigvalsh(G + reg * np.eye(C)).max())
    step = 1.0 / max(lam, 1e-12)
    beta = counts / counts.sum()
    obj = mmd_tars_objective(beta, G, h, reg)
    flags = ("not_converged",)
    for _ in range(int(max_iter)):
        grad = 2.0 * (G @ beta - h + reg * beta)
        beta_new = _project_simplex(beta - step * grad)
        new_obj = mmd_tars_objective(beta_new, G, h, reg)
        gain = obj - new_obj
        beta = beta_new
        obj = new_obj
        if 0 <= gain <= tol * max(1.0, abs(obj) + 1e-12):
            flags = ()
            break
    priors = counts / counts.sum()
    w = (beta / priors)[np.searchsorted(classes, ys)]
    weights = _normalize(w, flags)
    object.__setattr__(weights, "class_proportions", beta)
    return weights
