"""Shared-subspace adaptation: joint PCA, subspace alignment, transfer
component analysis, and transfer subspace learning.

Every method returns a :class:`Projection` whose ``transform`` embeds both
domains at fit and predict time (single shared map; subspace-alignment
additionally applies its aligner on the source side).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, qr

from . import errors, kernels


def _fix_signs(basis):
    """Make the largest-magnitude coordinate of each column positive."""
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


@dataclass(frozen=True)
class Projection:
    """A fitted subspace embedding.

    For primal methods ``basis`` has orthonormal columns and samples embed
    as ``(X - center) @ basis`` (source side additionally multiplied by
    ``aligner`` when present, as in subspace alignment, which keeps its own
    per-domain bases).  The kernel variant (TCA) stores dual coefficients
    over the joint training sample and embeds out-of-sample points through
    their kernel rows.
    """

    kind: str                      # "primal", "sa", "kernel"
    basis: np.ndarray              # d x k (primal/sa target side) or m x k (dual)
    center: np.ndarray
    aligner: np.ndarray = None     # SA's k x k alignment matrix
    source_basis: np.ndarray = None
    source_center: np.ndarray = None
    train_points: np.ndarray = None
    gamma: float = None
    flags: tuple = ()

    def transform(self, X, side="target"):
        X = np.asarray(X, dtype=np.float64)
        if self.kind == "kernel":
            K = kernels.rbf_kernel(X, self.train_points, self.gamma)
            return (K - self.center) @ self.basis
        if self.kind == "sa" and side == "source":
            return (X - self.source_center) @ self.source_basis @ self.aligner
        if self.kind == "sa":
            return (X - self.center) @ self.basis
        return (X - self.center) @ self.basis


def _clip_rank(X, k, eigvals, context):
    tol = max(X.shape) * np.finfo(float).eps * max(float(eigvals.max()), 0.0)
    rank = int(np.sum(eigvals > tol))
    if rank == 0:
        raise errors.RankDeficient(f"{context}: data has numerical rank 0")
    if k > rank:
        warnings.warn(
            f"{context}: requested {k} components but numerical rank is {rank}; "
            f"shrinking", stacklevel=3,
        )
        return rank, ("rank_deficient",)
    return k, ()


def pca_basis(X, k) -> Projection:
    """Top-k principal directions of the centered covariance.

    Components are ordered by descending eigenvalue with the sign fixed so
    the largest-magnitude coordinate of each direction is positive.  If k
    exceeds the numerical rank it shrinks with a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if not 1 <= k <= min(d, n - 1):
        raise errors.InvalidSpec(f"k={k} invalid for shape {X.shape}")
    center = X.mean(axis=0)
    cov = (X - center).T @ (X - center) / n
    vals, vecs = eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    k, flags = _clip_rank(X, k, vals, "pca_basis")
    basis = _fix_signs(vecs[:, :k])
    return Projection(kind="primal", basis=basis, center=center, flags=flags)


def pca_eigvals(X):
    """Eigenvalues of the centered covariance, descending (for tests)."""
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    return np.sort(eigh(Xc.T @ Xc / X.shape[0], eigvals_only=True))[::-1]


def jpca_adapt(Xs, Xt, k):
    """PCA on the row-concatenated domains; both project with the same basis."""
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    proj = pca_basis(np.vstack([Xs, Xt]), k)
    return proj.transform(Xs, "source"), proj.transform(Xt, "target"), proj


def sa_adapt(Xs, Xt, k):
    """Subspace alignment: per-domain PCA bases, source rotated onto target.

    Source embeds as ``(Xs - mu_s) P_s M`` with ``M = P_s' P_t``; target as
    ``(Xt - mu_t) P_t``.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    ps = pca_basis(Xs, k)
    pt = pca_basis(Xt, k)
    k_eff = min(ps.basis.shape[1], pt.basis.shape[1])
    Ps = ps.basis[:, :k_eff]
    Pt = pt.basis[:, :k_eff]
    M = Ps.T @ Pt
    proj = Projection(
        kind="sa", basis=Pt, center=pt.center, aligner=M,
        source_basis=Ps, source_center=ps.center,
        flags=tuple(sorted(set(ps.flags) | set(pt.flags))),
    )
    return proj.transform(Xs, "source"), proj.transform(Xt, "target"), proj


def tca_adapt(Xs, Xt, k, mu=10.0, gamma=None):
    """Transfer component analysis on the joint RBF Gram matrix.

    Solves the generalized eigenproblem ``K H K w = lambda (I + mu K L K) w``
    where L is the MMD indicator matrix and H the centering matrix, and
    embeds samples as their kernel rows against the joint training set
    times the top-k eigenvectors.  ``mu`` weights the domain-discrepancy
    penalty: larger values push harder toward domain-invariant components.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    ns, nt = Xs.shape[0], Xt.shape[0]
    m = ns + nt
    if not 1 <= k <= m - 1:
        raise errors.InvalidSpec(f"k={k} invalid for joint size {m}")
    joint = np.vstack([Xs, Xt])
    if gamma is None:
        gamma = 1.0 / joint.shape[1]
    gamma = kernels.resolve_gamma(gamma, joint)
    K = kernels.rbf_kernel(joint, joint, gamma)
    dvec = np.concatenate([np.full(ns, 1.0 / ns), np.full(nt, -1.0 / nt)])
    Kd = K @ dvec
    KLK = np.outer(Kd, Kd)
    Kc = K - K.mean(axis=0)
    KHK = Kc.T @ Kc  # K H H K = K H K since H is an idempotent projector
    KHK = 0.5 * (KHK + KHK.T)
    B = np.eye(m) + mu * KLK
    ridge = 0.0
    for attempt in range(2):
        try:
            vals, vecs = eigh(KHK, B + ridge * np.eye(m))
            break
        except np.linalg.LinAlgError:
            if attempt == 1:
                raise errors.EigSolverFailed("TCA generalized eigenproblem failed")
            ridge = 1e-8 * float(np.trace(B)) / m
    order = np.argsort(vals)[::-1]
    k_eff, flags = _clip_rank(K, k, np.maximum(vals[order], 0.0), "tca_adapt")
    W = _fix_signs(vecs[:, order[:k_eff]])
    proj = Projection(
        kind="kernel", basis=W, center=np.zeros(m), train_points=joint,
        gamma=gamma, flags=flags,
    )
    return proj.transform(Xs), proj.transform(Xt), proj


def linear_mmd2(A, B):
    """Squared distance between sample means (for MMD-reduction tests)."""
    return float(np.sum((np.mean(A, axis=0) - np.mean(B, axis=0)) ** 2))


def _flda_scatter(X, y, reg):
    classes = np.unique(y)
    mean = X.mean(axis=0)
    d = X.shape[1]
    Sw = reg * np.eye(d)
    Sb = np.zeros((d, d))
    for c in classes:
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        Sw += (Xc - mc).T @ (Xc - mc) / X.shape[0]
        Sb += Xc.shape[0] / X.shape[0] * np.outer(mc - mean, mc - mean)
    return Sw, Sb


def flda_basis(Xs, ys, k, reg=1e-4):
    """Closed-form Fisher LDA directions (orthonormalized by QR)."""
    Xs = np.asarray(Xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    Sw, Sb = _flda_scatter(Xs, ys, reg)
    vals, vecs = eigh(Sb, Sw)
    order = np.argsort(vals)[::-1]
    V = vecs[:, order[:k]]
    Q, _ = qr(V, mode="economic")
    return _fix_signs(Q)


def tsl_objective(P, Xs, ys, Xt, mu, length_scale, reg):
    """Trace-ratio FLDA score minus mu times the projected-density L2 gap.

    The divergence term is the L2 distance between Gaussian kernel density
    estimates of the projected domains with bandwidth ``length_scale``
    (kernel convolution gives bandwidth ``sqrt(2) * length_scale``).
    """
    value, _ = _tsl_value_grad(P, Xs, ys, Xt, mu, length_scale, reg, want_grad=False)
    return value


def _tsl_value_grad(P, Xs, ys, Xt, mu, length_scale, reg, want_grad=True):
    k = P.shape[1]
    Sw, Sb = _flda_scatter(Xs, ys, reg)
    A = P.T @ Sw @ P
    Ainv = np.linalg.inv(A)
    Bp = P.T @ Sb @ P
    fisher = float(np.trace(Ainv @ Bp))
    # d/dP tr((P'SwP)^-1 P'SbP) = 2 Sb P Ainv - 2 Sw P Ainv Bp Ainv
    grad = None
    if want_grad:
        grad = 2.0 * Sb @ P @ Ainv - 2.0 * Sw @ P @ (Ainv @ Bp @ Ainv)
    h2 = 2.0 * length_scale ** 2  # convolved kernel variance (per dim)
    gamma_div = 1.0 / (2.0 * h2)
    zs = Xs @ P
    zt = Xt @ P
    ns, nt = zs.shape[0], zt.shape[0]
    const = (2.0 * np.pi * h2) ** (-k / 2.0)
    Kss = np.exp(-gamma_div * kernels.squared_distances(zs))
    Ktt = np.exp(-gamma_div * kernels.squared_distances(zt))
    Kst = np.exp(-gamma_div * kernels.squared_distances(zs, zt))
    div = const * (Kss.mean() + Ktt.mean() - 2.0 * Kst.mean())
    value = fisher - mu * div
    if want_grad:
        # gradients of the pairwise Gaussian terms wrt projected coords
        gz_s = (-2.0 * gamma_div) * (
            (zs * Kss.sum(axis=1)[:, None] - Kss @ zs) * (2.0 / ns ** 2)
            - (zs * Kst.sum(axis=1)[:, None] - Kst @ zt) * (2.0 / (ns * nt))
        )
        gz_t = (-2.0 * gamma_div) * (
            (zt * Ktt.sum(axis=1)[:, None] - Ktt @ zt) * (2.0 / nt ** 2)
            - (zt * Kst.sum(axis=0)[:, None] - Kst.T @ zs) * (2.0 / (ns * nt))
        )
        grad_div = const * (Xs.T @ gz_s + Xt.T @ gz_t)
        grad = grad - mu * grad_div
    return value, grad


def tsl_adapt(Xs, ys, Xt, k, mu=1.0, length_scale=2.0, reg=1e-4, tol=1e-4,
              max_iter=300):
    """Transfer subspace learning: FLDA objective with a domain-density
    regularizer, optimized by projected gradient ascent on the Stiefel
    manifold (orthonormality restored by QR after every step).

    With ``mu = 0`` the optimum is the plain Fisher LDA subspace, which is
    also the starting point.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    d = Xs.shape[1]
    if not 1 <= k <= d:
        raise errors.InvalidSpec(f"k={k} invalid for d={d}")
    center = np.vstack([Xs, Xt]).mean(axis=0)
    Xs_c = Xs - center
    Xt_c = Xt - center
    P = flda_basis(Xs_c, ys, k, reg)
    value, grad = _tsl_value_grad(P, Xs_c, ys, Xt_c, mu, length_scale, reg)
    step = 1.0
    flags = ("not_converged",)
    for _ in range(int(max_iter)):
        # Riemannian gradient: project out the tangent-normal component
        rgrad = grad - P @ ((P.T @ grad + grad.T @ P) / 2.0)
        accepted = False
        for _ in range(30):
            Q, _ = qr(P + step * rgrad, mode="economic")
            val_new, grad_new = _tsl_value_grad(Q, Xs_c, ys, Xt_c, mu,
                                                length_scale, reg)
            if val_new >= value + 1e-4 * step * np.sum(rgrad ** 2):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            flags = ()
            break
        prev = value
        P, value, grad = Q, val_new, grad_new
        step = min(step * 2.0, 1e4)
        if abs(value - prev) <= tol * max(1.0, abs(prev)):
            flags = ()
            break
    P = _fix_signs(P)
    proj = Projection(kind="primal", basis=P, center=center, flags=flags)
    return proj.transform(Xs, "source"), proj.transform(Xt, "target"), proj
