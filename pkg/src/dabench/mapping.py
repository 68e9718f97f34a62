"""Feature-space alignment methods.

Covers second-order alignment (CORAL), the closed-form Gaussian Monge map
(linear OT), exact / entropic / class-regularized optimal transport with
barycentric mapping, and an MMD-minimizing location-scale map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist

from . import errors, kernels
from ._ot import round_to_polytope, sinkhorn_log, transport_simplex

#: exact_ot_plan refuses instances larger than this many plan entries.
MAX_PLAN_SIZE = 4_000_000

METRICS = ("sqeuclidean", "cosine", "cityblock")


@dataclass(frozen=True)
class AffineMap:
    """Affine feature map ``x -> A x + b`` (applied row-wise)."""

    A: np.ndarray
    b: np.ndarray
    flags: tuple = ()

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise errors.NonFiniteInput("affine map has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def apply(self, X):
        return np.asarray(X, dtype=np.float64) @ self.A.T + self.b


@dataclass(frozen=True)
class TransportPlan:
    """Coupling between source and target samples."""

    gamma: np.ndarray
    a: np.ndarray
    b: np.ndarray
    flags: tuple = ()

    def __post_init__(self, _tol=1e-6):
        gamma = np.asarray(self.gamma, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if np.any(gamma < 0):
            raise errors.InvalidSpec("transport plan entries must be nonnegative")
        if np.abs(gamma.sum(axis=1) - a).max() > _tol or \
           np.abs(gamma.sum(axis=0) - b).max() > _tol:
            raise errors.InvalidSpec("transport plan marginals violated")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def cost(self, C):
        return float(np.sum(self.gamma * C))


@dataclass(frozen=True)
class CostMatrix:
    """Ground cost between source and target samples."""

    C: np.ndarray
    metric: str = "sqeuclidean"
    norm: str = "median"

    def __post_init__(self):
        C = np.asarray(self.C, dtype=np.float64)
        if not np.all(np.isfinite(C)) or np.any(C < 0):
            raise errors.NonFiniteInput("cost matrix must be finite and nonnegative")
        object.__setattr__(self, "C", C)


def cost_matrix(Xs, Xt, metric="sqeuclidean", norm="median") -> CostMatrix:
    """Pairwise ground cost with optional median normalization.

    ``cosine`` is the cosine distance (1 - cosine similarity), clipped at
    zero for numerical safety.
    """
    if metric not in METRICS:
        raise errors.InvalidSpec(f"metric must be one of {METRICS}")
    C = cdist(np.asarray(Xs, float), np.asarray(Xt, float), metric=metric)
    np.maximum(C, 0.0, out=C)
    if norm == "median":
        med = float(np.median(C))
        if med > 0:
            C = C / med
    elif norm not in (None, "none"):
        raise errors.InvalidSpec("norm must be 'median' or none")
    return CostMatrix(C=C, metric=metric, norm=norm if norm else "none")


def _check_marginals(C, a, b):
    ns, nt = C.C.shape
    a = np.full(ns, 1.0 / ns) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(nt, 1.0 / nt) if b is None else np.asarray(b, dtype=np.float64)
    if a.shape != (ns,) or b.shape != (nt,):
        raise errors.LengthMismatch("marginals do not match the cost matrix")
    if np.any(a < 0) or np.any(b < 0):
        raise errors.InvalidSpec("marginals must be nonnegative")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise errors.Unbalanced(f"marginal sums differ: {a.sum()} vs {b.sum()}")
    return a, b


def exact_ot_plan(C: CostMatrix, a=None, b=None, max_iter=1_000_000,
                  basis=None) -> TransportPlan:
    """Exact optimal transport via the transportation simplex.

    Optimality is certified by dual feasibility within 1e-9 (relative to
    the cost magnitude).  Instances above :data:`MAX_PLAN_SIZE` entries
    are refused rather than silently approximated.
    """
    ns, nt = C.C.shape
    if ns * nt > MAX_PLAN_SIZE:
        raise errors.TooLarge(f"plan would have {ns * nt} entries")
    a, b = _check_marginals(C, a, b)
    gamma, certified, new_basis = transport_simplex(
        C.C, a, b, max_iter=int(max_iter), basis=basis
    )
    flags = () if certified else ("not_certified",)
    plan = TransportPlan(gamma=gamma, a=a, b=b, flags=flags)
    object.__setattr__(plan, "_basis", new_basis)
    return plan


def sinkhorn_plan(C: CostMatrix, a=None, b=None, reg_e=0.1, tol=1e-6,
                  max_iter=1000, warm_start=None) -> TransportPlan:
    """Entropy-regularized OT by log-domain Sinkhorn iterations.

    Runs until the marginal violation sup-norm drops below ``tol`` or
    ``max_iter`` sweeps; in the latter case the plan carries a
    ``"not_converged"`` flag.  The returned plan is rounded onto the
    transport polytope, so its marginals are exact either way.
    """
    if reg_e <= 0:
        raise errors.InvalidSpec("reg_e must be positive")
    a, b = _check_marginals(C, a, b)
    f0 = g0 = None
    if warm_start is not None:
        f0, g0 = warm_start
    gamma, f, g, err, n_iter = sinkhorn_log(
        C.C, a, b, reg=float(reg_e), tol=float(tol), max_iter=int(max_iter),
        f0=f0, g0=g0,
    )
    flags = () if err <= tol else ("not_converged",)
    plan = TransportPlan(gamma=gamma, a=a, b=b, flags=flags)
    object.__setattr__(plan, "_potentials", (f, g))
    return plan


def _lpl1_majorizer(gamma, class_rows, eps=1e-12, p=0.5):
    """Subgradient weights of the grouped l_{1/2,1} penalty at ``gamma``.

    For each target column and source class, the group mass m gets the
    concave-majorizer slope ``p * (m + eps)**(p-1)`` shared by all rows of
    that class.
    """
    n_classes = len(class_rows)
    nt = gamma.shape[1]
    W = np.empty_like(gamma)
    for rows in class_rows:
        mass = gamma[rows].sum(axis=0)
        W[rows] = p * np.power(mass + eps, p - 1.0)[None, :]
    return W


def _lpl1_penalty(gamma, class_rows, eps=1e-12, p=0.5):
    total = 0.0
    for rows in class_rows:
        total += float(np.power(gamma[rows].sum(axis=0) + eps, p).sum())
    return total


def _entropy(gamma):
    g = gamma[gamma > 0]
    return float(np.sum(g * (np.log(g) - 1.0)))


def class_reg_ot_plan(C: CostMatrix, ys, a=None, b=None, reg_e=0.1, reg_cl=0.1,
                      max_iter=10, max_inner_iter=1000, tol=1e-6) -> TransportPlan:
    """Entropic OT with a class-grouped lasso penalty (lpl1), solved by MM.

    Each outer round solves an entropic OT problem on the cost majorized
    with the current penalty subgradient; rounds that would increase the
    regularized objective by more than 1e-9 stop the iteration early and
    keep the previous plan.
    """
    a, b = _check_marginals(C, a, b)
    ys = np.asarray(ys, dtype=np.int64)
    if ys.shape[0] != C.C.shape[0]:
        raise errors.LengthMismatch("ys must label the source rows of C")
    class_rows = [np.flatnonzero(ys == c) for c in np.unique(ys)]

    def objective(gamma):
        return (float(np.sum(gamma * C.C)) + reg_e * _entropy(gamma)
                + reg_cl * _lpl1_penalty(gamma, class_rows))

    plan = sinkhorn_plan(C, a, b, reg_e=reg_e, tol=tol, max_iter=max_inner_iter)
    best = objective(plan.gamma)
    flags = set(plan.flags)
    warm = plan._potentials
    for _ in range(int(max_iter) - 1):
        W = _lpl1_majorizer(plan.gamma, class_rows)
        C_maj = CostMatrix(C.C + reg_cl * W, metric=C.metric, norm=C.norm)
        nxt = sinkhorn_plan(C_maj, a, b, reg_e=reg_e, tol=tol,
                            max_iter=max_inner_iter, warm_start=warm)
        val = objective(nxt.gamma)
        if val > best + 1e-9:
            flags.add("non_monotone_stop")
            break
        warm = nxt._potentials
        plan = nxt
        best = val
    return TransportPlan(gamma=plan.gamma, a=a, b=b,
                         flags=tuple(sorted(flags | set(plan.flags))))


def barycentric_map(plan: TransportPlan, Xt):
    """Map each source point to the plan-weighted average of target points."""
    Xt = np.asarray(Xt, dtype=np.float64)
    row_mass = plan.gamma.sum(axis=1)
    if np.any(row_mass <= 0):
        raise errors.ZeroRowMass("transport plan has empty rows")
    return (plan.gamma @ Xt) / row_mass[:, None]


def _covariance(X, assume_centered=False, ridge=0.0):
    X = np.asarray(X, dtype=np.float64)
    if not assume_centered:
        X = X - X.mean(axis=0)
    S = X.T @ X / X.shape[0]
    if ridge:
        S = S + ridge * np.eye(S.shape[0])
    return S


def _auto_ridge(S):
    return 1e-6 * float(np.trace(S)) / S.shape[0]


def _psd_sqrt(S, inverse=False, tol=1e-10):
    vals, vecs = eigh(S)
    top = float(vals.max()) if vals.size else 0.0
    if top <= 0 or vals.min() < -1e-8 * top:
        raise errors.NonPSD("covariance is not positive semidefinite")
    vals = np.clip(vals, 0.0, None)
    if inverse:
        if vals.min() < tol * top:
            raise errors.NonPSD("covariance is singular; inverse square root undefined")
        d = 1.0 / np.sqrt(vals)
    else:
        d = np.sqrt(vals)
    return (vecs * d) @ vecs.T


def coral_map(Xs, Xt, reg="auto", assume_centered=False) -> AffineMap:
    """Correlation alignment: recolor source second-order statistics.

    The returned map satisfies ``cov(A (Xs - mu_s)) = cov(Xt)`` up to the
    regularization ridge; unless ``assume_centered``, it also moves the
    source mean onto the target mean.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    Ss = _covariance(Xs, assume_centered)
    St = _covariance(Xt, assume_centered)
    if reg == "auto":
        Ss = Ss + _auto_ridge(Ss) * np.eye(Ss.shape[0])
        St = St + _auto_ridge(St) * np.eye(St.shape[0])
    elif reg:
        Ss = Ss + float(reg) * np.eye(Ss.shape[0])
        St = St + float(reg) * np.eye(St.shape[0])
    A = _psd_sqrt(St) @ _psd_sqrt(Ss, inverse=True)
    if assume_centered:
        b = np.zeros(Xs.shape[1])
    else:
        b = Xt.mean(axis=0) - A @ Xs.mean(axis=0)
    return AffineMap(A=A, b=b)


def linear_ot_map(Xs, Xt, reg=1e-8, bias=True) -> AffineMap:
    """Closed-form Monge map between Gaussian approximations.

    ``A = S^-1/2 (S^1/2 T S^1/2)^1/2 S^-1/2`` with S, T the regularized
    source and target covariances; A is symmetric PSD and maps the source
    covariance exactly onto the target one.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    d = Xs.shape[1]
    Ss = _covariance(Xs) + float(reg) * np.eye(d)
    St = _covariance(Xt) + float(reg) * np.eye(d)
    S_half = _psd_sqrt(Ss)
    S_inv_half = _psd_sqrt(Ss, inverse=True)
    M = _psd_sqrt(S_half @ St @ S_half)
    A = S_inv_half @ M @ S_inv_half
    A = 0.5 * (A + A.T)
    if bias:
        b = Xt.mean(axis=0) - A @ Xs.mean(axis=0)
    else:
        b = np.zeros(d)
    return AffineMap(A=A, b=b)


def mmd_ls_map(Xs, ys, Xt, gamma=1.0, reg_k=1e-8, reg_m=1e-8, tol=1e-5,
               max_iter=20) -> AffineMap:
    """Diagonal location-scale map minimizing the RBF MMD to the target.

    Optimizes per-dimension scales s > 0 and shifts t of
    ``MMD^2(s * Xs + t, Xt) + reg_m (||s - 1||^2 + ||t||^2)`` by projected
    gradient descent with Armijo backtracking.  ``ys`` is accepted for
    interface uniformity; the map is global, not per class.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    d = Xs.shape[1]
    gamma = kernels.resolve_gamma(gamma, Xs, Xt)

    def value_and_grad(s, t):
        # MMD^2 with the constant target-target block dropped; the reg_k
        # Gram ridge only adds the constant reg_k * (1/n + 1/m), kept here
        # so the reported value matches the ridged kernel exactly
        U = Xs * s + t
        Kuu = np.exp(-gamma * kernels.squared_distances(U))
        Kut = np.exp(-gamma * kernels.squared_distances(U, Xt))
        n, m = U.shape[0], Xt.shape[0]
        val = Kuu.mean() - 2.0 * Kut.mean() + reg_k * (1.0 / n + 1.0 / m)
        # dK(u_i, u_j)/du_i = -2 gamma (u_i - u_j) K_ij
        row_u = Kuu.sum(axis=1)
        G_u = (-2.0 * gamma) * (U * row_u[:, None] - Kuu @ U) * (2.0 / n ** 2)
        row_t = Kut.sum(axis=1)
        G_u -= (-2.0 * gamma) * (U * row_t[:, None] - Kut @ Xt) * (2.0 / (n * m))
        gs = (G_u * Xs).sum(axis=0) + 2.0 * reg_m * (s - 1.0)
        gt = G_u.sum(axis=0) + 2.0 * reg_m * t
        val += reg_m * (np.sum((s - 1.0) ** 2) + np.sum(t ** 2))
        return val, gs, gt

    s = np.ones(d)
    t = np.zeros(d)
    val, gs, gt = value_and_grad(s, t)
    step = 1.0
    flags = ("not_converged",)
    for _ in range(int(max_iter)):
        accepted = False
        for _ in range(30):
            s_new = np.maximum(s - step * gs, 1e-6)
            t_new = t - step * gt
            val_new, gs_new, gt_new = value_and_grad(s_new, t_new)
            decrease = val - val_new
            if decrease >= 1e-4 * step * (np.sum(gs ** 2) + np.sum(gt ** 2)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        s, t, prev = s_new, t_new, val
        val, gs, gt = val_new, gs_new, gt_new
        step = min(step * 2.0, 1e6)
        if abs(prev - val) <= tol * max(1.0, abs(prev)):
            flags = ()
            break
    return AffineMap(A=np.diag(s), b=t, flags=flags)


def mmd_ls_objective(Xs, Xt, s, t, gamma, reg_m=0.0):
    """Location-scale MMD^2 objective (without constant terms); for tests."""
    U = np.asarray(Xs, float) * s + t
    val = kernels.rbf_mmd2(U, Xt, gamma)
    val -= kernels.rbf_kernel(Xt, Xt, gamma).mean()
    return val + reg_m * (np.sum((s - 1.0) ** 2) + np.sum(t ** 2))
