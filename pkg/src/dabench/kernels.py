"""Shared kernel utilities: pairwise distances, RBF Gram matrices, bandwidth rules."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from . import errors


def squared_distances(X, Y=None):
    """Pairwise squared Euclidean distances, clipped at zero."""
    Y = X if Y is None else Y
    D = cdist(X, Y, metric="sqeuclidean")
    np.maximum(D, 0.0, out=D)
    return D


def rbf_kernel(X, Y=None, gamma=1.0):
    """Gaussian kernel matrix ``exp(-gamma * ||x - y||^2)``."""
    K = squared_distances(X, Y)
    K *= -float(gamma)
    np.exp(K, out=K)
    if not np.all(np.isfinite(K)):
        raise errors.GramNotFinite("RBF Gram matrix has non-finite entries")
    return K


def median_heuristic_gamma(X, Y=None, seed=0, max_pairs=500):
    """1 / median squared distance, estimated on a seeded subsample of pairs."""
    Z = X if Y is None else np.vstack([X, Y])
    n = Z.shape[0]
    rng = np.random.default_rng(seed)
    if n * (n - 1) // 2 > max_pairs:
        i = rng.integers(0, n, size=max_pairs)
        j = rng.integers(0, n, size=max_pairs)
        keep = i != j
        d2 = np.sum((Z[i[keep]] - Z[j[keep]]) ** 2, axis=1)
    else:
        d2 = squared_distances(Z)[np.triu_indices(n, k=1)]
    med = np.median(d2) if d2.size else 0.0
    if med <= 0:
        return 1.0
    return float(1.0 / med)


def resolve_gamma(gamma, X, Y=None, seed=0):
    """Resolve an RBF bandwidth specification to a positive float.

    Accepts a positive number, ``'scale'`` (1 / (d * var)), ``'auto'``
    (1 / d), or ``None`` / ``'median'`` (median heuristic on a seeded
    subsample of pairs).
    """
    if isinstance(gamma, str):
        Z = X if Y is None else np.vstack([X, Y])
        if gamma == "scale":
            var = float(Z.var())
            return 1.0 / (Z.shape[1] * var) if var > 0 else 1.0
        if gamma == "auto":
            return 1.0 / Z.shape[1]
        if gamma == "median":
            return median_heuristic_gamma(X, Y, seed=seed)
        raise errors.InvalidSpec(f"unknown gamma rule {gamma!r}")
    if gamma is None:
        return median_heuristic_gamma(X, Y, seed=seed)
    gamma = float(gamma)
    if gamma <= 0:
        raise errors.InvalidSpec("gamma must be positive")
    return gamma


def rbf_mmd2(X, Y, gamma, ridge=0.0):
    """Biased RBF MMD^2 between two samples.

    ``ridge`` is added to the Gram diagonals of the within-domain blocks
    (stabilisation only: it shifts the value by a constant and leaves
    gradients in the sample positions unchanged).
    """
    Kxx = rbf_kernel(X, X, gamma)
    Kyy = rbf_kernel(Y, Y, gamma)
    Kxy = rbf_kernel(X, Y, gamma)
    if ridge:
        Kxx = Kxx + ridge * np.eye(X.shape[0])
        Kyy = Kyy + ridge * np.eye(Y.shape[0])
    return float(Kxx.mean() + Kyy.mean() - 2.0 * Kxy.mean())
