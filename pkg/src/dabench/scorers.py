"""Model-selection scorers.

Each scorer maps a fitted adapter + predictor and some validation data to
a single higher-is-better scalar.  Only ``score_supervised`` may touch
target labels; every other scorer works from predictions, source labels,
importance weights, or adapter round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .core import MASKED, PredictionSet, accuracy

SCORER_IDS = ("Supervised", "IW", "DEV", "PE", "SND", "CircV", "MixVal")

#: Tie-break precedence when selecting the best unsupervised scorer.
UNSUPERVISED_PRECEDENCE = ("CircV", "IW", "MixVal", "PE", "DEV", "SND")

SND_TEMPERATURE = 0.05
MIXVAL_LAMBDA = 0.55
ENTROPY_FLOOR = 1e-12


@dataclass(frozen=True)
class ScorerValue:
    value: float
    scorer_id: str
    higher_is_better: bool = True
    flags: tuple = ()

    def __post_init__(self):
        if self.scorer_id not in SCORER_IDS:
            raise errors.InvalidSpec(f"unknown scorer id {self.scorer_id!r}")
        if not np.isfinite(self.value):
            raise errors.InvalidSpec("scorer values must be finite")


def score_supervised(pred: PredictionSet, y_target_val) -> ScorerValue:
    """Accuracy on labeled target validation data (evaluation oracle only)."""
    y = np.asarray(y_target_val, dtype=np.int64)
    if np.any(y == MASKED):
        raise errors.MaskedLabels("supervised scorer received masked labels")
    return ScorerValue(accuracy(y, pred.hard_labels()), "Supervised")


def score_iw(pred_source_val: PredictionSet, y_source_val, w_val) -> ScorerValue:
    """Importance-weighted source-validation accuracy."""
    y = np.asarray(y_source_val, dtype=np.int64)
    w = np.asarray(getattr(w_val, "values", w_val), dtype=np.float64)
    if w.sum() <= 0:
        raise errors.DegenerateWeights("importance weights sum to zero")
    correct = (pred_source_val.hard_labels() == y).astype(np.float64)
    return ScorerValue(float(np.sum(w * correct) / np.sum(w)), "IW")


def score_dev(pred_source_val: PredictionSet, y_source_val, w_val) -> ScorerValue:
    """Importance-weighted risk with a control-variate correction.

    The risk ``mean(wL) + eta * mean(w) - eta`` with
    ``eta = -cov(wL, w)/var(w)`` reduces the variance of the plain IW
    estimate; the negated risk is returned so that higher is better.
    Degenerate (near-constant) weights fall back to the IW value.
    """
    y = np.asarray(y_source_val, dtype=np.int64)
    w = np.asarray(getattr(w_val, "values", w_val), dtype=np.float64)
    if w.sum() <= 0:
        raise errors.DegenerateWeights("importance weights sum to zero")
    loss = (pred_source_val.hard_labels() != y).astype(np.float64)
    wl = w * loss
    var_w = float(np.var(w, ddof=1)) if w.shape[0] > 1 else 0.0
    if var_w < 1e-12:
        # near-constant weights: the control variate is undefined, so fall
        # back to the importance-weighted risk itself (eta = 0), which
        # ranks identically to the IW score
        return ScorerValue(-float(np.mean(wl)), "DEV", flags=("iw_fallback",))
    eta = -float(np.cov(wl, w, ddof=1)[0, 1]) / var_w
    risk = float(np.mean(wl) + eta * np.mean(w) - eta)
    return ScorerValue(-risk, "DEV")


def _entropy_rows(P):
    Q = np.maximum(P, ENTROPY_FLOOR)
    return -np.sum(Q * np.log(Q), axis=1)


def score_pe(pred_target_val: PredictionSet) -> ScorerValue:
    """Negated mean Shannon entropy of target predictions."""
    return ScorerValue(-float(np.mean(_entropy_rows(pred_target_val.probabilities))),
                       "PE")


def score_snd(pred_target_val: PredictionSet, tau=SND_TEMPERATURE) -> ScorerValue:
    """Soft neighborhood density of the target prediction rows.

    Cosine similarities between prediction rows (diagonal excluded) pass
    through a row-wise softmax at temperature ``tau``; the value is the
    mean row entropy, so denser soft neighborhoods score higher.
    """
    P = pred_target_val.probabilities
    n = P.shape[0]
    if n < 2:
        raise errors.TooFewSamples("SND needs at least two samples")
    norms = np.linalg.norm(P, axis=1)
    if np.any(norms <= 0):
        raise errors.DegenerateRows("zero-norm prediction row")
    U = P / norms[:, None]
    S = U @ U.T
    mask = ~np.eye(n, dtype=bool)
    ent = np.empty(n)
    for i in range(n):
        row = S[i][mask[i]] / tau
        row = row - row.max()
        e = np.exp(row)
        q = e / e.sum()
        ent[i] = -np.sum(q * np.log(np.maximum(q, ENTROPY_FLOOR)))
    return ScorerValue(float(ent.mean()), "SND")


def score_circv(replay, Xs, ys, Xt) -> ScorerValue:
    """Circular validation: adapt forward, pseudo-label, adapt back, score
    the recovered source labels against the true ones.

    ``replay`` is a fitted-adapter handle exposing
    ``predict_proba_target(X)`` and ``refit(Xs, ys, Xt)`` (same method and
    hyperparameters, domains as given).  A backward fit failure scores 0,
    flagged: a method that cannot round-trip ranks worst.
    """
    ys = np.asarray(ys, dtype=np.int64)
    pseudo = replay.predict_proba_target(Xt).hard_labels()
    try:
        backward = replay.refit(Xt, pseudo, Xs)
        recovered = backward.predict_proba_target(Xs).hard_labels()
    except Exception:
        return ScorerValue(0.0, "CircV", flags=("backward_fit_failed",))
    return ScorerValue(accuracy(ys, recovered), "CircV")


def score_mixval(predict_proba, Xt_val, lam=MIXVAL_LAMBDA, seed=0) -> ScorerValue:
    """Consistency of predictions on mixed target samples.

    Target points are pseudo-labeled by their own predictions, paired by a
    seeded shuffle, and mixed as ``lam * x_i + (1 - lam) * x_j`` with the
    dominant sample's pseudo-label as the proxy.  The value averages the
    proxy-label accuracy over intra-cluster pairs (equal pseudo-labels,
    probing neighborhood density) and inter-cluster pairs (different
    pseudo-labels, probing the boundary).
    """
    if not 0.5 < lam < 1.0:
        raise errors.InvalidSpec("lambda must be in (0.5, 1)")
    Xt_val = np.asarray(Xt_val, dtype=np.float64)
    n = Xt_val.shape[0]
    if n < 4:
        raise errors.TooFewSamples("MixVal needs at least 4 samples")
    pseudo = predict_proba(Xt_val).hard_labels()
    rng = np.random.default_rng(seed)
    partner = rng.permutation(n)
    mixed = lam * Xt_val + (1.0 - lam) * Xt_val[partner]
    proxy = pseudo  # dominant sample is x_i since lam > 0.5
    pred_mixed = predict_proba(mixed).hard_labels()
    intra = pseudo == pseudo[partner]
    flags = ()
    accs = []
    for mask in (intra, ~intra):
        if mask.any():
            accs.append(float(np.mean(pred_mixed[mask] == proxy[mask])))
    if len(accs) < 2:
        flags = ("single_group",)
    if np.unique(pseudo).shape[0] < 2:
        flags = flags + ("degenerate_predictor",)
    return ScorerValue(float(np.mean(accs)), "MixVal", flags=flags)
