"""Dataset construction: simulated shifts and CSV ingestion.

The simulated generator produces 2-D binary problems with one of four
controlled shifts between source and target (covariate, target,
conditional, subspace).  Real datasets arrive as CSV files of
pre-embedded features; embedding pipelines are out of scope here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _sim_constants as SC
from . import errors
from .core import DomainDataset

SHIFT_KINDS = ("covariate", "target", "conditional", "subspace")


@dataclass(frozen=True)
class SimShiftSpec:
    """Parameters of one simulated shift scenario."""

    kind: str
    n_source: int = 1000
    n_target: int = 1000
    noise: float = 1.0
    label_proportions: tuple = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise errors.InvalidSpec(f"kind must be one of {SHIFT_KINDS}")
        if self.n_source < 20 or self.n_target < 20:
            raise errors.InvalidSpec("need at least 20 samples per domain")
        if self.noise <= 0:
            raise errors.InvalidSpec("noise must be positive")
        if self.label_proportions is not None:
            p = np.asarray(self.label_proportions, dtype=np.float64)
            if p.ndim != 1 or p.shape[0] != 2 or np.any(p < 0) or \
               abs(p.sum() - 1.0) > 1e-9:
                raise errors.InvalidSpec("label_proportions must lie on the 2-simplex")
            object.__setattr__(self, "label_proportions", tuple(float(v) for v in p))


class _BlobMixture:
    """Two-class Gaussian blob mixture with density evaluation."""

    def __init__(self, noise):
        rad = np.deg2rad(SC.BASE_SATELLITE_ANGLES_DEG)
        self.c0 = np.asarray(SC.BASE_CLASS0_CENTER)
        self.s0 = SC.BASE_CLASS0_STD * noise
        self.c1 = SC.BASE_ARC_RADIUS * np.stack([np.cos(rad), np.sin(rad)], axis=1)
        self.s1 = SC.BASE_SATELLITE_STD * noise
        self.w1 = np.asarray(SC.BASE_SATELLITE_WEIGHTS)

    def sample_class(self, rng, y, n, shift=(0.0, 0.0)):
        shift = np.asarray(shift, dtype=np.float64)
        if y == 0:
            return self.c0 + shift + self.s0 * rng.standard_normal((n, 2))
        comp = rng.choice(len(self.w1), size=n, p=self.w1)
        return self.c1[comp] + shift + self.s1 * rng.standard_normal((n, 2))

    def class_density(self, X, y):
        if y == 0:
            d2 = np.sum((X - self.c0) ** 2, axis=1)
            return np.exp(-0.5 * d2 / self.s0 ** 2) / (2 * np.pi * self.s0 ** 2)
        dens = np.zeros(X.shape[0])
        for w, c in zip(self.w1, self.c1):
            d2 = np.sum((X - c) ** 2, axis=1)
            dens += w * np.exp(-0.5 * d2 / self.s1 ** 2) / (2 * np.pi * self.s1 ** 2)
        return dens

    def posterior_class1(self, X, priors=(0.5, 0.5)):
        p0 = priors[0] * self.class_density(X, 0)
        p1 = priors[1] * self.class_density(X, 1)
        total = p0 + p1
        total[total <= 0] = 1.0
        return p1 / total


def _sample_balanced(rng, mixture, n, proportions=(0.5, 0.5), shifts=None):
    y = (rng.random(n) >= proportions[0]).astype(np.int64)
    X = np.empty((n, 2))
    shifts = shifts or {0: (0.0, 0.0), 1: (0.0, 0.0)}
    for cls in (0, 1):
        mask = y == cls
        X[mask] = mixture.sample_class(rng, cls, int(mask.sum()), shifts[cls])
    return X, y


def _diag_coords(u, v):
    s = 1.0 / np.sqrt(2.0)
    return ((u + v) * s, (u - v) * s)


def _subspace_blobs():
    vc = SC.SUB_V_CENTER
    class0 = [(_diag_coords(0.0, vc - SC.SUB_CLASS0_V_OFFSET), 0.5),
              (_diag_coords(0.0, vc + SC.SUB_CLASS0_V_OFFSET), 0.5)]
    w_out = SC.SUB_CLASS1_OUTER_WEIGHT / 2.0
    w_in = (1.0 - SC.SUB_CLASS1_OUTER_WEIGHT) / 2.0
    u1 = SC.SUB_CLASS1_U
    class1 = [(_diag_coords(u1, vc - SC.SUB_CLASS1_INNER_V_OFFSET), w_in),
              (_diag_coords(u1, vc + SC.SUB_CLASS1_INNER_V_OFFSET), w_in),
              (_diag_coords(u1, vc - SC.SUB_CLASS1_OUTER_V_OFFSET), w_out),
              (_diag_coords(u1, vc + SC.SUB_CLASS1_OUTER_V_OFFSET), w_out)]
    return class0, class1


def _sample_subspace(rng, n, noise, flip):
    class0, class1 = _subspace_blobs()
    y = (rng.random(n) >= 0.5).astype(np.int64)
    X = np.empty((n, 2))
    for cls, blobs, std in ((0, class0, SC.SUB_CLASS0_STD),
                            (1, class1, SC.SUB_CLASS1_STD)):
        mask = y == cls
        k = int(mask.sum())
        centers = np.asarray([c for c, _ in blobs])
        weights = np.asarray([w for _, w in blobs])
        comp = rng.choice(len(blobs), size=k, p=weights / weights.sum())
        X[mask] = centers[comp] + std * noise * rng.standard_normal((k, 2))
    if flip:
        X = X[:, ::-1]
    return X, y


def make_shift_dataset(spec: SimShiftSpec) -> DomainDataset:
    """Generate one simulated source/target pair with a controlled shift.

    * covariate - the target feature marginal is translated while the
      class posterior p(y|x) of the source mixture labels both domains;
    * target - class proportions change, class conditionals stay;
    * conditional - each class conditional is displaced differently;
    * subspace - target features are the source features with the two
      coordinates swapped (diagonal flip); the layout keeps the class
      structure recoverable from the flip-invariant diagonal projection.

    Labels are present on both domains; the benchmark harness masks the
    target side during the nested loop.
    """
    rng = np.random.default_rng(spec.seed)
    noise = float(spec.noise) * SC.SHIFT_NOISE_MULT[spec.kind]
    if spec.kind == "subspace":
        Xs, ys = _sample_subspace(rng, spec.n_source, noise, flip=False)
        Xt, yt = _sample_subspace(rng, spec.n_target, noise, flip=True)
    else:
        mixture = _BlobMixture(noise)
        Xs, ys = _sample_balanced(rng, mixture, spec.n_source)
        if spec.kind == "covariate":
            delta = np.asarray(SC.COVARIATE_DELTA)
            Xt_base, _ = _sample_balanced(rng, mixture, spec.n_target)
            Xt = Xt_base + delta
            yt = (rng.random(spec.n_target) <
                  mixture.posterior_class1(Xt)).astype(np.int64)
        elif spec.kind == "target":
            props = spec.label_proportions or SC.TARGET_DEFAULT_PROPORTIONS
            Xt, yt = _sample_balanced(rng, mixture, spec.n_target, props)
        else:  # conditional
            shifts = {0: SC.CONDITIONAL_DELTA_CLASS0, 1: SC.CONDITIONAL_DELTA_CLASS1}
            Xt, yt = _sample_balanced(rng, mixture, spec.n_target, shifts=shifts)
    features = np.vstack([Xs, Xt])
    labels = np.concatenate([ys, yt])
    domain = np.concatenate([np.ones(spec.n_source, dtype=np.int64),
                             -np.ones(spec.n_target, dtype=np.int64)])
    return DomainDataset(
        features=features, labels=labels, domain=domain,
        name=f"sim_{spec.kind}", shift_id=spec.kind,
    )


@dataclass(frozen=True)
class CSVSchema:
    """Column layout of an ingested CSV dataset.

    ``source_values`` / ``target_values`` list the domain-column strings
    mapped to positive / negative domain ids (in listing order).  With
    ``feature_columns=None`` every remaining column is a feature.
    """

    label_column: str = "label"
    domain_column: str = "domain"
    source_values: tuple = ("source",)
    target_values: tuple = ("target",)
    feature_columns: tuple = None


def load_csv_dataset(path, schema: CSVSchema = None, name=None,
                     shift_id="default") -> DomainDataset:
    """Read a pre-embedded dataset from a CSV file.

    The file needs a header row, an integer label column, a text domain
    column, and float feature columns; non-numeric or non-finite feature
    values are rejected.
    """
    schema = schema or CSVSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise errors.SchemaMismatch(f"{path}: empty file")
        rows = list(reader)
    header = [h.strip() for h in header]
    for col in (schema.label_column, schema.domain_column):
        if col not in header:
            raise errors.SchemaMismatch(f"{path}: missing column {col!r}")
    label_ix = header.index(schema.label_column)
    domain_ix = header.index(schema.domain_column)
    if schema.feature_columns is None:
        feature_cols = [h for i, h in enumerate(header)
                        if i not in (label_ix, domain_ix)]
    else:
        feature_cols = list(schema.feature_columns)
        missing = sorted(set(feature_cols) - set(header))
        if missing:
            raise errors.SchemaMismatch(f"{path}: missing feature columns {missing}")
    if not feature_cols:
        raise errors.SchemaMismatch(f"{path}: no feature columns")
    feat_ix = [header.index(c) for c in feature_cols]
    domain_map = {v: i + 1 for i, v in enumerate(schema.source_values)}
    domain_map.update({v: -(i + 1) for i, v in enumerate(schema.target_values)})
    features, labels, domains = [], [], []
    for r, row in enumerate(rows, start=2):
        if not row:
            continue
        try:
            vals = [float(row[i]) for i in feat_ix]
        except (ValueError, IndexError):
            raise errors.NonNumericFeature(f"{path}:{r}: non-numeric feature value")
        if not all(np.isfinite(vals)):
            raise errors.NonNumericFeature(f"{path}:{r}: non-finite feature value")
        dom_raw = row[domain_ix].strip()
        if dom_raw not in domain_map:
            raise errors.SchemaMismatch(
                f"{path}:{r}: domain value {dom_raw!r} not in schema"
            )
        try:
            label = int(row[label_ix])
        except ValueError:
            raise errors.SchemaMismatch(f"{path}:{r}: non-integer label")
        features.append(vals)
        labels.append(label)
        domains.append(domain_map[dom_raw])
    if not features:
        raise errors.SchemaMismatch(f"{path}: no data rows")
    domains = np.asarray(domains)
    if not (domains > 0).any() or not (domains < 0).any():
        raise errors.EmptyDomain(f"{path}: need both source and target rows")
    return DomainDataset(
        features=np.asarray(features), labels=np.asarray(labels),
        domain=domains, name=name or str(path), shift_id=shift_id,
    )
