"""Method registry: every benchmarked DA method behind one fit interface.

A method takes labeled source data, unlabeled target data, a base
estimator spec, and one grid cell of hyperparameters, and returns a
:class:`FittedAdapter` that can predict class probabilities for points of
either domain and re-fit itself with the domains swapped (needed by the
circular-validation scorer).

Default hyperparameter grids follow the published benchmark protocol; a
grid value list is swept, a ``"a__b"`` key sweeps linked tuples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .. import errors, mapping, otherda, reweight, subspace
from ..core import PredictionSet
from ..estimators import EstimatorSpec, fit_estimator, fit_soft_targets


def expand_grid(grid):
    """Expand a grid dict into the list of cells (first-order preserved).

    List values are swept; ``"a__b"`` keys hold lists of tuples unpacked
    into parameters ``a`` and ``b``; scalar values are fixed.
    """
    keys, choices = [], []
    for key, value in grid.items():
        vals = value if isinstance(value, (list, tuple)) else [value]
        keys.append(key)
        choices.append(list(vals))
    cells = []
    for combo in itertools.product(*choices):
        cell = {}
        for key, value in zip(keys, combo):
            if "__" in key:
                names = key.split("__")
                if len(names) != len(value):
                    raise errors.ConfigError(f"linked grid key {key} arity mismatch")
                cell.update(dict(zip(names, value)))
            else:
                cell[key] = value
        cells.append(cell)
    return cells


@dataclass
class FittedAdapter:
    """A fitted (adapter, base estimator) pair with domain-aware transforms."""

    method_id: str
    params: dict
    base_spec: EstimatorSpec
    predictor: object
    seed: int
    transform_source: object = None     # callable or None (identity)
    transform_target: object = None
    has_feature_transform: bool = False
    weights: np.ndarray = None
    extras: dict = field(default_factory=dict)

    def _src(self, X):
        return self.transform_source(X) if self.transform_source else X

    def _tgt(self, X):
        return self.transform_target(X) if self.transform_target else X

    def predict_proba_target(self, X) -> PredictionSet:
        return self.predictor.predict_proba(self._tgt(X))

    def predict_proba_source(self, X) -> PredictionSet:
        return self.predictor.predict_proba(self._src(X))

    def refit(self, Xs, ys, Xt) -> "FittedAdapter":
        """Re-run the same method and hyperparameters on new domains."""
        method = get_method(self.method_id)
        return method.fit(Xs, ys, Xt, self.base_spec, self.params, self.seed)


def _nearest_displacement_transform(X_fit, X_mapped):
    """Out-of-sample extension for plan-based maps: move a new point by the
    displacement of its nearest fit-time source point."""
    tree = cKDTree(X_fit)
    disp = X_mapped - X_fit

    def transform(X):
        X = np.asarray(X, dtype=np.float64)
        _, idx = tree.query(X, k=1)
        return X + disp[idx]

    return transform


@dataclass(frozen=True)
class MethodDef:
    id: str
    display: str
    family: str
    grid: dict
    fit_fn: object
    requires_kernel_base: bool = False
    binary_only: bool = False
    oracle: bool = False

    def fit(self, Xs, ys, Xt, base_spec, params, seed, oracle_labels=None,
            memo=None) -> FittedAdapter:
        if self.requires_kernel_base and base_spec.kind != "kernel-logistic":
            base_spec = EstimatorSpec("kernel-logistic",
                                      {"l2": 1e-4, "gamma": "scale"})
        kwargs = {}
        if self.oracle:
            kwargs["oracle_labels"] = oracle_labels
        if memo is not None and self.fit_fn in _MEMO_AWARE:
            kwargs["memo"] = memo
        adapter = self.fit_fn(self.id, Xs, ys, Xt, base_spec, dict(params),
                              seed, **kwargs)
        adapter.method_id = self.id
        adapter.base_spec = base_spec
        return adapter

    def effective_cells(self, grid, d, ns, nt):
        """Expand and deduplicate grid cells after feasibility clipping.

        Duplicate effective cells are dropped keeping the first occurrence,
        which matches the first-grid-order tie rule of the selection step.
        """
        cells = expand_grid(grid)
        seen = set()
        out = []
        for cell in cells:
            eff = dict(cell)
            if "n_components" in eff:
                cap = (ns + nt - 1) if self.id == "tca" else min(d, ns - 1, nt - 1)
                eff["n_components"] = int(min(int(eff["n_components"]), cap))
            key = tuple(sorted((k, repr(v)) for k, v in eff.items()))
            if key not in seen:
                seen.add(key)
                out.append(eff)
        return out


# --- fit implementations ----------------------------------------------------

def _identity_adapter(method_id, params, base_spec, predictor, seed, w=None):
    return FittedAdapter(method_id=method_id, params=params, base_spec=base_spec,
                         predictor=predictor, seed=seed, weights=w)


def _fit_train_src(mid, Xs, ys, Xt, base, params, seed):
    return _identity_adapter(mid, params, base, fit_estimator(base, Xs, ys), seed)


def _fit_train_tgt(mid, Xs, ys, Xt, base, params, seed, oracle_labels=None):
    if oracle_labels is None:
        # backward/replay path: no oracle labels, behave like a source fit
        return _fit_train_src(mid, Xs, ys, Xt, base, params, seed)
    predictor = fit_estimator(base, Xt, oracle_labels)
    return _identity_adapter(mid, params, base, predictor, seed)


def _fit_reweight(weights_fn):
    def fit(mid, Xs, ys, Xt, base, params, seed):
        w = weights_fn(Xs, ys, Xt, params, seed)
        predictor = fit_estimator(base, Xs, ys, w.values)
        return _identity_adapter(mid, params, base, predictor, seed, w=w.values)

    return fit


def _w_dens(Xs, ys, Xt, p, seed):
    return reweight.density_ratio_weights("kde", Xs, Xt, bandwidth=p["bandwidth"])


def _w_disc(Xs, ys, Xt, p, seed):
    return reweight.density_ratio_weights(
        "discriminative", Xs, Xt, domain_classifier=p["domain_classifier"])


def _w_gauss(Xs, ys, Xt, p, seed):
    return reweight.density_ratio_weights("gaussian", Xs, Xt, reg=p["reg"])


def _w_nn(Xs, ys, Xt, p, seed):
    return reweight.density_ratio_weights(
        "nearest-neighbor", Xs, Xt, laplace_smoothing=p["laplace_smoothing"])


def _w_kliep(Xs, ys, Xt, p, seed):
    return reweight.kliep_weights(
        Xs, Xt, gamma=p["gamma"], n_centers=p["n_centers"], tol=p["tol"],
        max_iter=p["max_iter"], cv=p.get("cv", 5), seed=p.get("random_state", seed))


def _w_kmm(Xs, ys, Xt, p, seed):
    return reweight.kmm_weights(
        Xs, Xt, gamma=p["gamma"], B=p["B"], tol=p["tol"],
        max_iter=p["max_iter"], smooth_weights=p.get("smooth_weights", False),
        seed=seed)


def _w_mmdtars(Xs, ys, Xt, p, seed):
    return reweight.mmd_target_shift_weights(
        Xs, ys, Xt, gamma=p["gamma"], reg=p["reg"], tol=p["tol"],
        max_iter=p["max_iter"], seed=seed)


def _fit_affine(map_fn):
    def fit(mid, Xs, ys, Xt, base, params, seed):
        amap = map_fn(Xs, ys, Xt, params, seed)
        mapped = amap.apply(Xs)
        predictor = fit_estimator(base, mapped, ys)
        return FittedAdapter(
            method_id=mid, params=params, base_spec=base, predictor=predictor,
            seed=seed, transform_source=amap.apply, has_feature_transform=True,
        )

    return fit


def _m_coral(Xs, ys, Xt, p, seed):
    return mapping.coral_map(Xs, Xt, reg=p["reg"],
                             assume_centered=p["assume_centered"])


def _m_linot(Xs, ys, Xt, p, seed):
    return mapping.linear_ot_map(Xs, Xt, reg=p["reg"], bias=p["bias"])


def _m_mmdls(Xs, ys, Xt, p, seed):
    return mapping.mmd_ls_map(
        Xs, ys, Xt, gamma=p["gamma"], reg_k=p["reg_k"], reg_m=p["reg_m"],
        tol=p["tol"], max_iter=p["max_iter"])


def _fit_ot_barycentric(plan_fn):
    def fit(mid, Xs, ys, Xt, base, params, seed):
        plan = plan_fn(Xs, ys, Xt, params)
        mapped = mapping.barycentric_map(plan, Xt)
        predictor = fit_estimator(base, mapped, ys)
        return FittedAdapter(
            method_id=mid, params=params, base_spec=base, predictor=predictor,
            seed=seed,
            transform_source=_nearest_displacement_transform(Xs, mapped),
            has_feature_transform=True,
        )

    return fit


def _p_mapot(Xs, ys, Xt, p):
    C = mapping.cost_matrix(Xs, Xt, metric=p["metric"], norm=p["norm"])
    return mapping.exact_ot_plan(C, max_iter=p["max_iter"])


def _p_entot(Xs, ys, Xt, p):
    C = mapping.cost_matrix(Xs, Xt, metric=p["metric"], norm=p["norm"])
    return mapping.sinkhorn_plan(C, reg_e=p["reg_e"], tol=p["tol"],
                                 max_iter=p["max_iter"])


def _p_classregot(Xs, ys, Xt, p):
    C = mapping.cost_matrix(Xs, Xt, metric=p["metric"], norm="median")
    return mapping.class_reg_ot_plan(
        C, ys, reg_e=p["reg_e"], reg_cl=p["reg_cl"], max_iter=p["max_iter"],
        max_inner_iter=p["max_inner_iter"], tol=p["tol"])


def _fit_subspace(adapt_fn):
    def fit(mid, Xs, ys, Xt, base, params, seed, memo=None):
        zs, zt, proj = adapt_fn(Xs, ys, Xt, params, memo)
        predictor = fit_estimator(base, zs, ys)
        return FittedAdapter(
            method_id=mid, params=params, base_spec=base, predictor=predictor,
            seed=seed,
            transform_source=lambda X: proj.transform(X, "source"),
            transform_target=lambda X: proj.transform(X, "target"),
            has_feature_transform=True,
        )

    return fit


def _s_jpca(Xs, ys, Xt, p, memo):
    k = int(p["n_components"])
    return subspace.jpca_adapt(Xs, Xt, k)


def _s_sa(Xs, ys, Xt, p, memo):
    k = int(p["n_components"])
    return subspace.sa_adapt(Xs, Xt, k)


def _s_tca(Xs, ys, Xt, p, memo):
    k = int(p["n_components"])
    mu = float(p["mu"])
    # the eigenbasis depends on mu but not on k: share it across the grid
    key = ("tca_eig", mu)
    if memo is not None and key in memo:
        full = memo[key]
    else:
        cap = Xs.shape[0] + Xt.shape[0] - 1
        _, _, full = subspace.tca_adapt(Xs, Xt, min(100, cap), mu=mu,
                                        gamma="scale")
        if memo is not None:
            memo[key] = full
    proj = subspace.Projection(
        kind="kernel", basis=full.basis[:, :k], center=full.center,
        train_points=full.train_points, gamma=full.gamma, flags=full.flags,
    )
    return proj.transform(Xs), proj.transform(Xt), proj


def _s_tsl(Xs, ys, Xt, p, memo):
    k = int(p["n_components"])
    return subspace.tsl_adapt(
        Xs, ys, Xt, k, mu=float(p["mu"]), length_scale=float(p["length_scale"]),
        reg=float(p["reg"]), tol=float(p["tol"]), max_iter=int(p["max_iter"]))


def _fit_jdot(mid, Xs, ys, Xt, base, params, seed):
    res = otherda.jdot_fit(
        Xs, ys, Xt, alpha=params["alpha"], n_iter_max=params["n_iter_max"],
        thr_weights=params["thr_weights"], tol=params["tol"], base=base)
    return FittedAdapter(
        method_id=mid, params=params, base_spec=base, predictor=res.predictor,
        seed=seed, extras={"n_iter": res.n_iter, "flags": res.flags},
    )


def _fit_otlabelprop(mid, Xs, ys, Xt, base, params, seed):
    pred = otherda.ot_label_prop(
        Xs, ys, Xt, metric=params["metric"], reg=params["reg"],
        n_iter_max=params["n_iter_max"])
    # train the base estimator on the propagated soft labels so the method
    # can predict out-of-sample points
    predictor = fit_soft_targets(
        base, Xt, pred.probabilities, np.ones(Xt.shape[0]), pred.classes)
    return FittedAdapter(
        method_id=mid, params=params, base_spec=base, predictor=predictor,
        seed=seed, extras={"flags": pred.flags},
    )


def _fit_dasvm(mid, Xs, ys, Xt, base, params, seed):
    predictor = otherda.dasvm_fit(
        Xs, ys, Xt, base, max_iter=params["max_iter"],
        step_fraction=params.get("step_fraction", 0.05))
    return FittedAdapter(method_id=mid, params=params, base_spec=base,
                         predictor=predictor, seed=seed)


_GAMMA_GRID = [0.0001, 0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]
_METRICS = ["sqeuclidean", "cosine", "cityblock"]
_K_GRID = [1, 2, 5, 10, 20, 50, 100]

METHOD_REGISTRY = {}


def _register(mdef):
    METHOD_REGISTRY[mdef.id] = mdef


_register(MethodDef("train_src", "Train Src", "baseline", {}, _fit_train_src))
_register(MethodDef("train_tgt", "Train Tgt", "baseline", {}, _fit_train_tgt,
                    oracle=True))

_register(MethodDef(
    "dens_rw", "Dens. RW", "reweight",
    {"bandwidth": [0.01, 0.1, 1.0, 10.0, 100.0, "scott", "silverman"]},
    _fit_reweight(_w_dens)))
_register(MethodDef(
    "disc_rw", "Disc. RW", "reweight",
    # the published grid also lists XGB; tree boosting is out of scope and
    # the config layer rejects it explicitly
    {"domain_classifier": ["LR", "SVC"]},
    _fit_reweight(_w_disc)))
_register(MethodDef(
    "gauss_rw", "Gauss. RW", "reweight", {"reg": ["auto"]},
    _fit_reweight(_w_gauss)))
_register(MethodDef(
    "kliep", "KLIEP", "reweight",
    {"cv": 5, "gamma": _GAMMA_GRID + ["auto", "scale"], "max_iter": 1000,
     "n_centers": 100, "random_state": 0, "tol": 1e-6},
    _fit_reweight(_w_kliep)))
_register(MethodDef(
    "kmm", "KMM", "reweight",
    {"B": 1000.0, "gamma": _GAMMA_GRID + [None], "max_iter": 1000,
     "smooth_weights": False, "tol": 1e-6},
    _fit_reweight(_w_kmm)))
_register(MethodDef(
    "nn_rw", "NN RW", "reweight", {"laplace_smoothing": [True, False]},
    _fit_reweight(_w_nn)))
_register(MethodDef(
    "mmd_tars", "MMDTarS", "reweight",
    {"gamma": _GAMMA_GRID + [None], "max_iter": 1000, "reg": 1e-6, "tol": 1e-6},
    _fit_reweight(_w_mmdtars)))

_register(MethodDef(
    "coral", "CORAL", "mapping",
    {"assume_centered": [False, True], "reg": ["auto"]},
    _fit_affine(_m_coral)))
_register(MethodDef(
    "map_ot", "MapOT", "mapping",
    {"max_iter": 1_000_000, "metric": _METRICS, "norm": "median"},
    _fit_ot_barycentric(_p_mapot)))
_register(MethodDef(
    "ent_ot", "EntOT", "mapping",
    {"max_iter": 1000, "metric": _METRICS, "norm": "median",
     "reg_e": [0.1, 0.5, 1.0], "tol": 1e-6},
    _fit_ot_barycentric(_p_entot)))
_register(MethodDef(
    "class_reg_ot", "ClassRegOT", "mapping",
    {"max_inner_iter": 1000, "max_iter": 10, "metric": _METRICS,
     "norm": "lpl1", "tol": 1e-6,
     "reg_cl__reg_e": [(0.1, 0.1), (0.5, 0.5), (1.0, 1.0)]},
    _fit_ot_barycentric(_p_classregot)))
_register(MethodDef(
    "lin_ot", "LinOT", "mapping",
    {"bias": [True, False], "reg": [1e-8, 1e-6, 0.1, 1.0, 10.0]},
    _fit_affine(_m_linot)))
_register(MethodDef(
    "mmd_ls", "MMD-LS", "mapping",
    {"gamma": [0.01, 0.1, 1.0, 10.0, 100.0], "max_iter": 20, "reg_k": 1e-8,
     "reg_m": 1e-8, "tol": 1e-5},
    _fit_affine(_m_mmdls)))

_register(MethodDef(
    "jpca", "JPCA", "subspace", {"n_components": _K_GRID},
    _fit_subspace(_s_jpca)))
_register(MethodDef(
    "sa", "SA", "subspace", {"n_components": _K_GRID}, _fit_subspace(_s_sa)))
_register(MethodDef(
    "tca", "TCA", "subspace",
    {"kernel": "rbf", "mu": [10.0, 100.0], "n_components": _K_GRID},
    _fit_subspace(_s_tca)))
_register(MethodDef(
    "tsl", "TSL", "subspace",
    {"base_method": "flda", "length_scale": 2, "max_iter": 300,
     "mu": [0.1, 1.0, 10.0], "n_components": _K_GRID, "reg": 1e-4,
     "tol": 1e-4},
    _fit_subspace(_s_tsl)))

_register(MethodDef(
    "jdot", "JDOT", "other",
    {"alpha": [0.1, 0.3, 0.5, 0.7, 0.9], "n_iter_max": 100,
     "thr_weights": 1e-7, "tol": 1e-6},
    _fit_jdot, requires_kernel_base=True))
_register(MethodDef(
    "ot_label_prop", "OTLabelProp", "other",
    {"metric": _METRICS,
     "n_iter_max__reg": [(10000, None), (100, 0.1), (100, 1.0)]},
    _fit_otlabelprop))
_register(MethodDef(
    "dasvm", "DASVM", "other", {"max_iter": 200}, _fit_dasvm,
    requires_kernel_base=True, binary_only=True))

_MEMO_AWARE = {f.fit_fn for f in METHOD_REGISTRY.values()
               if f.family == "subspace"}


def get_method(method_id) -> MethodDef:
    if method_id not in METHOD_REGISTRY:
        if "xgb" in str(method_id).lower():
            raise errors.ConfigError(
                "XGBoost-based methods are out of scope for this benchmark")
        raise errors.ConfigError(
            f"unknown method {method_id!r}; known: {sorted(METHOD_REGISTRY)}")
    return METHOD_REGISTRY[method_id]
