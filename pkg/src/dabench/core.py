"""Data model, dataset splitting, and classification metrics.

Conventions used throughout the package:

* features are float64 matrices of shape ``(n, d)``,
* ``domain > 0`` marks source samples, ``domain < 0`` marks target samples,
* target labels may be masked with the sentinel ``MASKED`` (= -1); masked
  labels must never reach estimator- or scorer-facing code.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import errors

#: Sentinel for hidden target labels.
MASKED = -1


def stable_seed(*parts) -> int:
    """Derive a reproducible 32-bit seed from arbitrary string-able parts.

    Used everywhere a work unit needs its own RNG stream: the derived seed
    depends only on the values passed in, never on execution order, so
    results are identical for any worker count.
    """
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _as_float_matrix(X, name="features"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise errors.InvalidSpec(f"{name} must be a 2-D matrix, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise errors.NonNumericFeature(f"{name} contain non-finite entries")
    return X


def _freeze(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DomainDataset:
    """A labeled source / (possibly unlabeled) target dataset pair.

    Parameters
    ----------
    features : ndarray of shape (n, d)
        Stacked source and target samples.
    labels : ndarray of shape (n,)
        Integer class labels >= 0, or ``MASKED`` for hidden target labels.
    domain : ndarray of shape (n,)
        Signed domain indicator: positive = source, negative = target.
    name : str
        Dataset identifier used in result tables.
    shift_id : str
        Identifier of the adaptation task (shift scenario) inside the dataset.
    """

    features: np.ndarray
    labels: np.ndarray
    domain: np.ndarray
    name: str = "dataset"
    shift_id: str = "default"

    def __post_init__(self):
        X = _as_float_matrix(self.features)
        y = np.asarray(self.labels, dtype=np.int64)
        dom = np.asarray(self.domain, dtype=np.int64)
        n = X.shape[0]
        if X.shape[1] < 1 or n < 2:
            raise errors.InvalidSpec("need n >= 2 samples and d >= 1 features")
        if y.shape != (n,) or dom.shape != (n,):
            raise errors.LengthMismatch(
                f"features ({n}), labels ({y.shape}) and domain ({dom.shape}) disagree"
            )
        if np.any(dom == 0):
            raise errors.InvalidSpec("domain indicator must be nonzero (signed)")
        src = dom > 0
        if not src.any() or not (~src).any():
            raise errors.EmptyDomain("need at least one source and one target sample")
        if np.any(y[src] < 0):
            raise errors.MaskedLabels("source samples must carry labels >= 0")
        if np.any(y[~src] < MASKED):
            raise errors.InvalidSpec("labels must be >= 0 or the MASKED sentinel")
        object.__setattr__(self, "features", _freeze(X))
        object.__setattr__(self, "labels", _freeze(y))
        object.__setattr__(self, "domain", _freeze(dom))

    # -- convenience views ----------------------------------------------
    @property
    def is_source(self):
        return self.domain > 0

    @property
    def source_features(self):
        return self.features[self.is_source]

    @property
    def source_labels(self):
        return self.labels[self.is_source]

    @property
    def target_features(self):
        return self.features[~self.is_source]

    @property
    def target_labels(self):
        """True target labels; only evaluation code may read them."""
        return self.labels[~self.is_source]

    @property
    def n_source(self):
        return int(np.count_nonzero(self.is_source))

    @property
    def n_target(self):
        return int(self.features.shape[0] - self.n_source)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.features.tobytes())
        h.update(self.labels.tobytes())
        h.update(self.domain.tobytes())
        h.update(f"{self.name}|{self.shift_id}".encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SplitPlan:
    """Stratified train/test index pairs, one per repeat."""

    repeats: tuple
    ratio: float
    seed: int

    def __post_init__(self):
        frozen = tuple(
            (_freeze(np.asarray(tr, dtype=np.int64)), _freeze(np.asarray(te, dtype=np.int64)))
            for tr, te in self.repeats
        )
        object.__setattr__(self, "repeats", frozen)

    def __len__(self):
        return len(self.repeats)


@dataclass(frozen=True)
class PredictionSet:
    """Class-probability predictions for a batch of samples."""

    probabilities: np.ndarray
    classes: np.ndarray
    flags: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.probabilities, dtype=np.float64)
        classes = np.asarray(self.classes, dtype=np.int64)
        if P.ndim != 2 or P.shape[1] != classes.shape[0]:
            raise errors.InvalidSpec("probabilities must be (n, C) with C = len(classes)")
        if classes.shape[0] < 2:
            raise errors.InvalidSpec("need C >= 2 classes")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise errors.InvalidSpec("probabilities must be finite and nonnegative")
        if P.shape[0] and np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-9:
            raise errors.InvalidSpec("probability rows must sum to 1 within 1e-9")
        object.__setattr__(self, "probabilities", _freeze(P))
        object.__setattr__(self, "classes", _freeze(classes))

    def hard_labels(self):
        """Row-argmax labels; ties resolved toward the lowest class id."""
        return self.classes[np.argmax(self.probabilities, axis=1)]


def stratified_split(labels, ratio, n_repeats, seed) -> SplitPlan:
    """Split indices into stratified train/test pairs, repeated ``n_repeats`` times.

    Per-class test counts follow the largest-remainder rule on the ideal
    fractional counts so that class proportions in train and test are each
    within one sample of the stratified ideal; remainder ties break by
    ascending class id.

    Parameters
    ----------
    labels : array of shape (n,)
        Integer labels defining the strata.
    ratio : float
        Train fraction, in (0, 1).
    n_repeats : int
        Number of independent repeats.
    seed : int
        RNG seed; equal seeds reproduce the plan bit-for-bit.
    """
    if not 0.0 < ratio < 1.0:
        raise errors.InvalidRatio(f"train ratio must be in (0,1), got {ratio}")
    y = np.asarray(labels, dtype=np.int64)
    n = y.shape[0]
    if n < 2:
        raise errors.InvalidSpec("need at least 2 samples to split")
    classes, counts = np.unique(y, return_counts=True)

    # largest-remainder apportionment of the total test count over classes
    n_test_total = int(round(n * (1.0 - ratio)))
    n_test_total = min(max(n_test_total, 1), n - 1)
    ideal = counts * (1.0 - ratio)
    base = np.floor(ideal).astype(np.int64)
    remainder = ideal - base
    missing = n_test_total - int(base.sum())
    if missing > 0:
        # ties on the remainder break by ascending class id (stable sort)
        order = np.argsort(-remainder, kind="stable")
        base[order[:missing]] += 1
    elif missing < 0:
        order = np.argsort(remainder, kind="stable")
        take = order[base[order] > 0][: -missing]
        base[take] -= 1
    for cls, cnt, tst in zip(classes, counts, base):
        if cnt - tst < 1:
            raise errors.ClassTooSmall(
                f"class {cls} has {cnt} member(s); cannot keep >= 1 in train"
            )

    rng = np.random.default_rng(seed)
    repeats = []
    for _ in range(n_repeats):
        train_idx, test_idx = [], []
        for cls, tst in zip(classes, base):
            idx = np.flatnonzero(y == cls)
            perm = rng.permutation(idx)
            test_idx.append(perm[:tst])
            train_idx.append(perm[tst:])
        tr = np.sort(np.concatenate(train_idx))
        te = np.sort(np.concatenate(test_idx))
        repeats.append((tr, te))
    return SplitPlan(repeats=tuple(repeats), ratio=float(ratio), seed=int(seed))


def _check_pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise errors.LengthMismatch(
            f"label vectors disagree: {y_true.shape} vs {y_pred.shape}"
        )
    return y_true, y_pred


def accuracy(y_true, y_pred) -> float:
    """Fraction of exact matches."""
    y_true, y_pred = _check_pair(y_true, y_pred)
    if np.any(y_true == MASKED):
        raise errors.MaskedLabels("y_true contains masked labels")
    if y_true.size == 0:
        raise errors.LengthMismatch("empty label vectors")
    return float(np.mean(y_true == y_pred))


def macro_f1(y_true, y_pred, classes=None) -> float:
    """Unweighted mean of per-class F1 scores.

    A class absent from both ``y_true`` and ``y_pred`` contributes F1 = 0
    only when it appears in the declared ``classes`` set; by default the
    class set is the union of observed labels.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    if np.any(y_true == MASKED):
        raise errors.MaskedLabels("y_true contains masked labels")
    if classes is None:
        classes = np.union1d(np.unique(y_true), np.unique(y_pred))
    classes = np.asarray(classes, dtype=np.int64)
    scores = []
    for cls in classes:
        tp = np.sum((y_pred == cls) & (y_true == cls))
        fp = np.sum((y_pred == cls) & (y_true != cls))
        fn = np.sum((y_pred != cls) & (y_true == cls))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return float(np.mean(scores))
