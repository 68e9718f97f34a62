"""Nested cross-validation execution engine.

A work unit is one (dataset, method): the outer loop splits source and
target into train/test five times; inside each outer split a nested loop
fits every grid cell on inner-train data and evaluates all scorers on the
inner validation sets with target labels withheld.  Per scorer, the cell
with the best mean inner score is refit on the outer train split and
evaluated on the outer test split.

Units run in parallel when ``workers > 1``; all randomness is derived
from per-unit stable seeds, so results are identical for any worker
count.  Finished units are cached as JSON-lines keyed by a content hash
of everything that can influence them.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
import time

import numpy as np

from .. import errors, estimators
from ..core import MASKED, accuracy, macro_f1, stable_seed, stratified_split
from ..data import CSVSchema, SimShiftSpec, load_csv_dataset, make_shift_dataset
from ..scorers import (
    score_circv,
    score_dev,
    score_iw,
    score_mixval,
    score_pe,
    score_snd,
    score_supervised,
)
from .config import RECORD_SCHEMA_VERSION, BenchConfig, TrialRecord, write_records
from .methods import get_method

NEG_INF = float("-inf")


def _build_dataset(entry):
    kind = entry.get("kind", "simulated")
    if kind == "simulated":
        spec = SimShiftSpec(
            kind=entry["shift"],
            n_source=entry.get("n_source", 1000),
            n_target=entry.get("n_target", 1000),
            noise=entry.get("noise", 1.0),
            label_proportions=entry.get("label_proportions"),
            seed=entry.get("seed", 0),
        )
        return make_shift_dataset(spec)
    if kind == "csv":
        schema = CSVSchema(**entry.get("schema", {}))
        return load_csv_dataset(entry["path"], schema,
                                name=entry.get("name"),
                                shift_id=entry.get("shift_id", "default"))
    raise errors.ConfigError(f"unknown dataset kind {kind!r}")


def _resolve_base(config, dataset, seed):
    if config.base_estimator != "auto":
        spec = dict(config.base_estimator)
        kind = spec.pop("kind")
        return estimators.EstimatorSpec(kind, spec)
    splits = stratified_split(dataset.source_labels, config.ratio,
                              min(3, config.n_outer), stable_seed(seed, "base"))
    return estimators.select_base_estimator(
        dataset, estimators.default_candidates(), splits)


def _disc_ratio(Xs_tr, Xt_tr, query):
    """Importance weights at ``query`` from a linear domain classifier."""
    from ..reweight import _discriminative_weights

    return _discriminative_weights(Xs_tr, Xt_tr, "LR", query=query).values


class _UnitRun:
    """State for one (dataset, method) nested-CV execution."""

    def __init__(self, config, dataset, method, base_spec, deadline):
        self.config = config
        self.ds = dataset
        self.method = method
        self.base_spec = base_spec
        self.deadline = deadline
        self.ratio_memo = {}

    def out_of_time(self):
        return time.monotonic() > self.deadline

    # -- scorer evaluation over one fitted cell --------------------------
    def _score_cell(self, adapter, inner_key, Xs_tr, ys_tr, Xt_tr,
                    Xs_val, ys_val, Xt_val, yt_val_hidden, mix_seed):
        scores = {}
        want = self.config.scorers
        preds_t = preds_s = None
        try:
            preds_t = adapter.predict_proba_target(Xt_val)
            preds_s = adapter.predict_proba_source(Xs_val)
        except Exception:
            return {s: NEG_INF for s in want}
        if "Supervised" in want:
            try:
                scores["Supervised"] = score_supervised(preds_t, yt_val_hidden).value
            except Exception:
                scores["Supervised"] = NEG_INF
        if "IW" in want or "DEV" in want:
            try:
                if adapter.has_feature_transform:
                    w_val = _disc_ratio(adapter._src(Xs_tr), adapter._tgt(Xt_tr),
                                        adapter._src(Xs_val))
                else:
                    if inner_key not in self.ratio_memo:
                        self.ratio_memo[inner_key] = _disc_ratio(
                            Xs_tr, Xt_tr, Xs_val)
                    w_val = self.ratio_memo[inner_key]
                if "IW" in want:
                    scores["IW"] = score_iw(preds_s, ys_val, w_val).value
                if "DEV" in want:
                    scores["DEV"] = score_dev(preds_s, ys_val, w_val).value
            except Exception:
                scores.update({s: NEG_INF for s in ("IW", "DEV") if s in want})
        if "PE" in want:
            try:
                scores["PE"] = score_pe(preds_t).value
            except Exception:
                scores["PE"] = NEG_INF
        if "SND" in want:
            try:
                scores["SND"] = score_snd(preds_t).value
            except Exception:
                scores["SND"] = NEG_INF
        if "MixVal" in want:
            try:
                scores["MixVal"] = score_mixval(
                    adapter.predict_proba_target, Xt_val, seed=mix_seed).value
            except Exception:
                scores["MixVal"] = NEG_INF
        if "CircV" in want:
            try:
                scores["CircV"] = score_circv(adapter, Xs_tr, ys_tr, Xt_tr).value
            except Exception:
                scores["CircV"] = NEG_INF
        return scores

    # -- the nested loop for one outer split ------------------------------
    def run_outer(self, outer_i, src_split, tgt_split):
        cfg = self.config
        ds = self.ds
        Xs, ys = ds.source_features, ds.source_labels
        Xt, yt = ds.target_features, ds.target_labels
        s_tr, s_te = src_split
        t_tr, t_te = tgt_split
        unit_seed = stable_seed(cfg.seed, ds.name, ds.shift_id, self.method.id)

        inner_src = stratified_split(ys[s_tr], cfg.ratio, cfg.n_inner,
                                     stable_seed(unit_seed, outer_i, "src"))
        # target-side stratification uses hidden labels for evaluation
        # integrity; the labels themselves never reach the nested loop
        inner_tgt = stratified_split(yt[t_tr], cfg.ratio, cfg.n_inner,
                                     stable_seed(unit_seed, outer_i, "tgt"))

        cells = self.method.effective_cells(
            self.grid, Xs.shape[1], s_tr.shape[0], t_tr.shape[0])
        n_cells = len(cells)
        score_table = {s: np.full((n_cells, cfg.n_inner), NEG_INF)
                       for s in cfg.scorers}
        first_error = ""
        for inner_i in range(cfg.n_inner):
            if self.out_of_time():
                raise TimeoutError
            si_tr, si_val = inner_src.repeats[inner_i]
            ti_tr, ti_val = inner_tgt.repeats[inner_i]
            Xs_tr, ys_tr = Xs[s_tr][si_tr], ys[s_tr][si_tr]
            Xs_val, ys_val = Xs[s_tr][si_val], ys[s_tr][si_val]
            Xt_tr = Xt[t_tr][ti_tr]
            Xt_val = Xt[t_tr][ti_val]
            yt_val_hidden = yt[t_tr][ti_val]
            yt_tr_oracle = yt[t_tr][ti_tr]
            memo = {}
            for cell_i, params in enumerate(cells):
                if self.out_of_time():
                    raise TimeoutError
                try:
                    adapter = self.method.fit(
                        Xs_tr, ys_tr, Xt_tr, self.base_spec, params,
                        stable_seed(unit_seed, outer_i, inner_i),
                        oracle_labels=yt_tr_oracle, memo=memo)
                except Exception as exc:
                    if not first_error:
                        first_error = f"{type(exc).__name__}: {exc}"
                    continue
                mix_seed = stable_seed(unit_seed, outer_i, inner_i, cell_i, "mix")
                cell_scores = self._score_cell(
                    adapter, (outer_i, inner_i), Xs_tr, ys_tr, Xt_tr,
                    Xs_val, ys_val, Xt_val, yt_val_hidden, mix_seed)
                for scorer, value in cell_scores.items():
                    score_table[scorer][cell_i, inner_i] = value

        # mean inner score per (cell, scorer); cells need successes on at
        # least half the inner splits, the rest are dropped
        need = math.ceil(cfg.n_inner / 2)
        records = []
        refit_cache = {}
        for scorer in cfg.scorers:
            table = score_table[scorer]
            finite = np.isfinite(table)
            counts = finite.sum(axis=1)
            means = np.where(
                counts >= need,
                np.where(finite, table, 0.0).sum(axis=1) / np.maximum(counts, 1),
                NEG_INF,
            )
            best_cell = int(np.argmax(means))
            record = TrialRecord(
                dataset=ds.name, shift_id=ds.shift_id, method_id=self.method.id,
                scorer_id=scorer, outer_split=outer_i,
            )
            if not np.isfinite(means[best_cell]):
                record.failed = True
                record.fail_reason = first_error or "no grid cell survived"
                records.append(record)
                continue
            params = cells[best_cell]
            record.chosen_params = _jsonable(params)
            record.chosen_inner_score = float(means[best_cell])
            key = json.dumps(record.chosen_params, sort_keys=True)
            try:
                if key not in refit_cache:
                    t0 = time.monotonic()
                    adapter = self.method.fit(
                        Xs[s_tr], ys[s_tr], Xt[t_tr], self.base_spec, params,
                        stable_seed(unit_seed, outer_i, "refit"),
                        oracle_labels=yt[t_tr], memo=None)
                    refit_cache[key] = (adapter, time.monotonic() - t0)
                adapter, fit_seconds = refit_cache[key]
                pred_t = adapter.predict_proba_target(Xt[t_te]).hard_labels()
                pred_s = adapter.predict_proba_source(Xs[s_te]).hard_labels()
                record.target_test_accuracy = accuracy(yt[t_te], pred_t)
                record.source_test_accuracy = accuracy(ys[s_te], pred_s)
                record.target_test_f1 = macro_f1(yt[t_te], pred_t)
                record.fit_seconds = float(fit_seconds)
            except Exception as exc:
                record.failed = True
                record.fail_reason = f"{type(exc).__name__}: {exc}"
            records.append(record)
        return records

    def run(self, grid):
        cfg = self.config
        self.grid = grid
        ds = self.ds
        unit_seed = stable_seed(cfg.seed, ds.name, ds.shift_id, self.method.id)
        src_plan = stratified_split(ds.source_labels, cfg.ratio, cfg.n_outer,
                                    stable_seed(unit_seed, "outer", "src"))
        tgt_plan = stratified_split(ds.target_labels, cfg.ratio, cfg.n_outer,
                                    stable_seed(unit_seed, "outer", "tgt"))
        records = []
        for outer_i in range(cfg.n_outer):
            records.extend(self.run_outer(
                outer_i, src_plan.repeats[outer_i], tgt_plan.repeats[outer_i]))
        return records


def _jsonable(params):
    out = {}
    for key, value in params.items():
        if isinstance(value, (np.integer,)):
            value = int(value)
        elif isinstance(value, (np.floating,)):
            value = float(value)
        out[key] = value
    return out


def _timeout_records(config, dataset, method_id):
    return [
        TrialRecord(dataset=dataset.name, shift_id=dataset.shift_id,
                    method_id=method_id, scorer_id=scorer, outer_split=outer_i,
                    timed_out=True)
        for outer_i in range(config.n_outer)
        for scorer in config.scorers
    ]


def _unit_cache_key(config, dataset, method, grid, base_spec):
    payload = {
        "schema": RECORD_SCHEMA_VERSION,
        "dataset": dataset.fingerprint(),
        "method": method.id,
        "grid": _jsonable({k: str(v) for k, v in grid.items()}),
        "base": (base_spec.kind, base_spec.hyperparameters),
        "seed": config.seed,
        "n_outer": config.n_outer,
        "n_inner": config.n_inner,
        "ratio": config.ratio,
        "scorers": config.scorers,
        "timeout": config.timeout_seconds,
        "forced": method.id in config.force_timeout,
    }
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def run_unit(config: BenchConfig, dataset_entry, method_entry):
    """Execute one (dataset, method) unit; returns (records, n_fits)."""
    dataset = _build_dataset(dataset_entry)
    method = get_method(method_entry["id"])
    grid = method_entry["grid"] or method.grid
    base_spec = _resolve_base(config, dataset,
                              stable_seed(config.seed, dataset.name))

    cache_dir = config.resolved_cache_dir()
    cache_path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        key = _unit_cache_key(config, dataset, method, grid, base_spec)
        cache_path = os.path.join(
            cache_dir, f"{method.id}__{dataset.name}__{key}.jsonl")
        if os.path.exists(cache_path):
            from .config import read_records

            return read_records(cache_path), 0

    fits_before = estimators.FIT_COUNT[0]
    if method.id in config.force_timeout:
        records = _timeout_records(config, dataset, method.id)
    else:
        deadline = time.monotonic() + config.timeout_seconds
        unit = _UnitRun(config, dataset, method, base_spec, deadline)
        try:
            records = unit.run(grid)
        except TimeoutError:
            records = _timeout_records(config, dataset, method.id)
    n_fits = estimators.FIT_COUNT[0] - fits_before
    if cache_path:
        write_records(records, cache_path)
    return records, n_fits


def _unit_worker(payload):
    config = BenchConfig(**payload["config"])
    records, n_fits = run_unit(config, payload["dataset"], payload["method"])
    return [r.to_json() for r in records], n_fits


def run_nested_cv(config: BenchConfig):
    """Run the benchmark; returns (records, diagnostics).

    Per-trial failures and timeouts are captured in the records and never
    abort the run.  ``diagnostics["n_fits"]`` counts base-estimator fits
    actually executed (zero when every unit replays from cache).
    """
    import dataclasses as _dc

    # resolve the base estimator once per dataset so that parallel units
    # skip the source-side grid search
    if config.base_estimator == "auto":
        resolved = []
        for entry in config.datasets:
            dataset = _build_dataset(entry)
            spec = _resolve_base(config, dataset,
                                 stable_seed(config.seed, dataset.name))
            resolved.append((entry, spec))
        configs = []
        for entry, spec in resolved:
            sub = _dc.replace(
                config,
                base_estimator={"kind": spec.kind, **spec.params},
                datasets=[entry],
            )
            configs.append((sub, entry))
    else:
        configs = [(config, entry) for entry in config.datasets]

    units = [
        {"config": cfg, "dataset": entry, "method": m}
        for cfg, entry in configs
        for m in config.method_entries()
    ]
    records = []
    n_fits = 0
    if config.workers <= 1:
        for unit in units:
            recs, fits = run_unit(unit["config"], unit["dataset"], unit["method"])
            records.extend(recs)
            n_fits += fits
    else:
        payloads = [
            {"config": _dc.asdict(u["config"]), "dataset": u["dataset"],
             "method": u["method"]}
            for u in units
        ]
        with concurrent.futures.ProcessPoolExecutor(config.workers) as pool:
            for lines, fits in pool.map(_unit_worker, payloads):
                records.extend(TrialRecord.from_json(line) for line in lines)
                n_fits += fits
    records.sort(key=lambda r: (r.dataset, r.shift_id, r.method_id,
                                r.scorer_id, r.outer_split))
    return records, {"n_fits": n_fits, "n_units": len(units)}
