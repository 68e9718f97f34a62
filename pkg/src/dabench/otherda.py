"""Methods that produce a target predictor directly.

JDOT alternates between an exact transport plan on a joint feature+label
cost and refitting the classifier on plan-propagated soft labels; OT label
propagation pushes source labels through a single plan; DASVM self-labels
target points in confidence order while expelling source points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import errors
from .core import PredictionSet
from .estimators import (
    PROB_FLOOR,
    EstimatorSpec,
    ProbPredictor,
    fit_estimator,
    fit_soft_targets,
)
from .mapping import CostMatrix, cost_matrix, exact_ot_plan, sinkhorn_plan


@dataclass
class JDOTResult:
    predictor: ProbPredictor
    plan_gamma: np.ndarray
    objectives: list = field(default_factory=list)
    n_iter: int = 0
    flags: tuple = ()


def _onehot(y, classes):
    Y = np.zeros((y.shape[0], classes.shape[0]))
    Y[np.arange(y.shape[0]), np.searchsorted(classes, y)] = 1.0
    return Y


def _label_loss(Ys_onehot, proba_target):
    """Cross-entropy cost block: L[i, t] = -sum_c Ys[i,c] log p_t[c]."""
    logp = np.log(np.maximum(proba_target, PROB_FLOOR))
    return -(Ys_onehot @ logp.T)


def jdot_fit(Xs, ys, Xt, alpha=0.5, n_iter_max=100, thr_weights=1e-7,
             tol=1e-6, base: EstimatorSpec = None, metric="sqeuclidean") -> JDOTResult:
    """Joint distribution optimal transport for classification.

    Alternates (1) an exact OT plan on
    ``alpha * ||x_i - x_t||^2 + (1 - alpha) * CE(y_i, f(x_t))`` and
    (2) refitting ``f`` on the target points with plan-propagated soft
    labels, dropping label entries whose mass falls below
    ``thr_weights`` relative to the largest.  Stops when the joint
    transport objective decrease falls below ``tol``; an increase stops
    the iteration immediately and keeps the best iterate.
    """
    if not 0.0 < alpha < 1.0:
        raise errors.InvalidSpec("alpha must be in (0, 1)")
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    base = base or EstimatorSpec("kernel-logistic", {"l2": 1e-2, "gamma": "scale"})
    classes = np.unique(ys)
    Ys = _onehot(ys, classes)
    feat_cost = cost_matrix(Xs, Xt, metric=metric, norm="none").C
    f = fit_estimator(base, Xs, ys)
    basis = None
    best = np.inf
    objectives = []
    flags = ()
    plan_gamma = None
    n_iter = 0
    for n_iter in range(1, int(n_iter_max) + 1):
        proba_t = f.predict_proba(Xt).probabilities
        C = alpha * feat_cost + (1.0 - alpha) * _label_loss(Ys, proba_t)
        plan = exact_ot_plan(CostMatrix(C, metric=metric, norm="none"), basis=basis)
        basis = plan._basis
        value = plan.cost(C)
        objectives.append(value)
        if value > best + 1e-9:
            flags = ("non_monotone_stop",)
            break
        improved = best - value
        best = value
        plan_gamma = plan.gamma
        if n_iter > 1 and improved <= tol * max(1.0, abs(best)):
            break
        # soft labels on target: class mass per target point, thresholded
        mass = plan.gamma.T @ Ys                       # (n_t, C)
        mass = np.where(mass >= thr_weights * mass.max(), mass, 0.0)
        col_mass = mass.sum(axis=1)
        keep = col_mass > 0
        if not keep.any():
            flags = flags + ("empty_soft_labels",)
            break
        soft = mass[keep] / col_mass[keep][:, None]
        f_new = fit_soft_targets(base, Xt[keep], soft, col_mass[keep], classes)
        f = f_new
    return JDOTResult(predictor=f, plan_gamma=plan_gamma,
                      objectives=objectives, n_iter=n_iter, flags=flags)


def ot_label_prop(Xs, ys, Xt, metric="sqeuclidean", reg=None,
                  n_iter_max=10000) -> PredictionSet:
    """Propagate source labels to target points through a transport plan.

    ``reg=None`` uses the exact plan, otherwise entropic OT with that
    regularization.  Probabilities for target point t are the
    class-mass distribution of the plan column t; empty columns fall back
    to a uniform row and flag the result.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    classes = np.unique(ys)
    if classes.shape[0] == 1:
        # degenerate single-class source: pad with an unused zero-mass class
        # so the prediction set stays well formed
        classes = np.array([classes[0], classes[0] + 1])
    C = cost_matrix(Xs, Xt, metric=metric, norm="none")
    if reg is None:
        plan = exact_ot_plan(C, max_iter=int(n_iter_max))
    else:
        plan = sinkhorn_plan(C, reg_e=float(reg), max_iter=int(n_iter_max))
    mass = plan.gamma.T @ _onehot(ys, classes)
    col = mass.sum(axis=1)
    flags = tuple(plan.flags)
    empty = col <= 0
    if empty.any():
        mass[empty] = 1.0 / classes.shape[0]
        col[empty] = 1.0
        flags = flags + ("zero_column_mass",)
    P = mass / col[:, None]
    return PredictionSet(probabilities=P, classes=classes, flags=flags)


def dasvm_fit(Xs, ys, Xt, base: EstimatorSpec, max_iter=200,
              step_fraction=0.05) -> ProbPredictor:
    """Self-labeling domain adaptation for binary problems.

    Each round fits the kernel base estimator on the current labeled pool,
    moves the most confident unlabeled target points (balanced across
    predicted classes, ties broken by sample index) into the pool with
    their pseudo-labels, and expels the same number of least confident
    source points.  Stops once every source point is gone or no moves
    remain; the returned predictor is trained on the pseudo-labeled target
    plus any residual source.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    Xt = np.asarray(Xt, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    classes = np.unique(ys)
    if classes.shape[0] != 2:
        raise errors.NotBinary("DASVM handles binary problems only")
    if base.kind != "kernel-logistic":
        raise errors.ConfigError("DASVM requires the kernel base estimator")
    n_t = Xt.shape[0]
    if n_t == 0 or Xs.shape[0] == 0:
        raise errors.EmptyPool("need nonempty source and target")
    batch = max(1, int(np.ceil(step_fraction * n_t)))
    src_alive = np.ones(Xs.shape[0], dtype=bool)
    tgt_labeled = np.zeros(n_t, dtype=bool)
    tgt_pseudo = np.full(n_t, -1, dtype=np.int64)

    def pool():
        X_parts = [Xs[src_alive]]
        y_parts = [ys[src_alive]]
        if tgt_labeled.any():
            X_parts.append(Xt[tgt_labeled])
            y_parts.append(tgt_pseudo[tgt_labeled])
        return np.vstack(X_parts), np.concatenate(y_parts)

    predictor = None
    for _ in range(int(max_iter)):
        X_pool, y_pool = pool()
        if np.unique(y_pool).shape[0] < 2:
            break
        predictor = fit_estimator(base, X_pool, y_pool)
        unlabeled = np.flatnonzero(~tgt_labeled)
        if unlabeled.shape[0] == 0 and not src_alive.any():
            break
        moved = 0
        if unlabeled.shape[0] > 0:
            proba = predictor.predict_proba(Xt[unlabeled]).probabilities
            conf = np.abs(proba[:, 1] - 0.5)
            pred = (proba[:, 1] >= 0.5).astype(np.int64)
            take = []
            per_class = max(1, batch // 2)
            for cls_bit in (0, 1):
                cand = np.flatnonzero(pred == cls_bit)
                # ties in confidence break toward the lowest sample index
                order = cand[np.lexsort((unlabeled[cand], -conf[cand]))]
                take.extend(order[:per_class].tolist())
            take = np.array(sorted(set(take)), dtype=np.int64)[:batch]
            chosen = unlabeled[take]
            tgt_labeled[chosen] = True
            tgt_pseudo[chosen] = classes[pred[take]]
            moved = chosen.shape[0]
        if moved == 0 and not src_alive.any():
            break
        if moved == 0:
            src_alive[:] = False
            continue
        alive_idx = np.flatnonzero(src_alive)
        if alive_idx.shape[0] > 0:
            proba_s = predictor.predict_proba(Xs[alive_idx]).probabilities
            conf_s = np.abs(proba_s[:, 1] - 0.5)
            order = alive_idx[np.lexsort((alive_idx, conf_s))]
            src_alive[order[:moved]] = False
        if not src_alive.any() and not (~tgt_labeled).any():
            break
    X_final_parts, y_final_parts = [], []
    if tgt_labeled.any():
        X_final_parts.append(Xt[tgt_labeled])
        y_final_parts.append(tgt_pseudo[tgt_labeled])
    if src_alive.any():
        X_final_parts.append(Xs[src_alive])
        y_final_parts.append(ys[src_alive])
    if not X_final_parts:
        raise errors.EmptyPool("DASVM ended with an empty labeled pool")
    X_final = np.vstack(X_final_parts)
    y_final = np.concatenate(y_final_parts)
    if np.unique(y_final).shape[0] < 2:
        # degenerate self-labeling collapse: fall back to the last usable fit
        if predictor is None:
            raise errors.EmptyPool("DASVM collapsed to a single class")
        return predictor
    return fit_estimator(base, X_final, y_final)
