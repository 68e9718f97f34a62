"""Aggregation of trial records into benchmark tables.

The main table has one row per method and one column per dataset: mean
target accuracy under the method's selected scorer, annotated by a paired
Wilcoxon signed-rank test against the source-only baseline (`++`/`+` for a
significant gain, `-`/`--` for a significant drop, the double symbol when
the mean change exceeds 0.05).  A companion scorer-analysis table reports
the Pearson correlation between inner validation scores and outer target
accuracy per scorer.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .. import errors
from ..scorers import UNSUPERVISED_PRECEDENCE
from ..stats import average_rank, pearson_r, wilcoxon_signed_rank
from .methods import METHOD_REGISTRY

BASELINE_ID = "train_src"
ORACLE_ID = "train_tgt"

#: Scorer whose records represent scorer-independent baselines in tables.
CANONICAL_SCORER = "Supervised"

STRONG_DELTA = 0.05


def select_best_scorer(records, method_id):
    """The unsupervised scorer with the highest mean target accuracy.

    Ties break by the fixed precedence (CircV, IW, MixVal, PE, DEV, SND).
    Baselines have no meaningful scorer choice and return ``None``.
    """
    if method_id in (BASELINE_ID, ORACLE_ID):
        return None
    by_scorer = {}
    for rec in records:
        if rec.method_id != method_id or not rec.ok():
            continue
        if rec.scorer_id == "Supervised":
            continue
        by_scorer.setdefault(rec.scorer_id, []).append(rec.target_test_accuracy)
    if not by_scorer:
        raise errors.NoRecords(f"no usable records for method {method_id}")
    order = {s: i for i, s in enumerate(UNSUPERVISED_PRECEDENCE)}
    ranked = sorted(
        by_scorer.items(),
        key=lambda kv: (-float(np.mean(kv[1])), order.get(kv[0], 99)),
    )
    return ranked[0][0]


def _dataset_order(records):
    seen = []
    for rec in records:
        if rec.dataset not in seen:
            seen.append(rec.dataset)
    return seen


def _method_order(records):
    known = [m for m in METHOD_REGISTRY if any(r.method_id == m for r in records)]
    ordered = [m for m in METHOD_REGISTRY.keys() if m in known]
    extra = sorted({r.method_id for r in records} - set(ordered))
    return ordered + extra


def _records_for(records, method_id, scorer_id, dataset=None):
    return [
        r for r in records
        if r.method_id == method_id and r.scorer_id == scorer_id
        and (dataset is None or r.dataset == dataset)
    ]


def build_table(records, level=0.05):
    """Aggregate records into the results-table structure.

    Returns a dict with methods, datasets, per-cell means/annotations,
    selected scorers, and average ranks.
    """
    if not records:
        raise errors.NoRecords("no records to aggregate")
    if not any(r.method_id == BASELINE_ID for r in records):
        raise errors.MissingBaseline("records must include the train_src baseline")
    datasets = _dataset_order(records)
    methods = _method_order(records)
    selected = {}
    for m in methods:
        try:
            selected[m] = select_best_scorer(records, m)
        except errors.NoRecords:
            selected[m] = None
    table = {}
    score_matrix = np.full((len(methods), len(datasets)), np.nan)
    for i, m in enumerate(methods):
        scorer = selected[m] or CANONICAL_SCORER
        row = {}
        for j, ds in enumerate(datasets):
            mine = [r for r in _records_for(records, m, scorer, ds) if r.ok()]
            base = {
                (r.shift_id, r.outer_split): r.target_test_accuracy
                for r in _records_for(records, BASELINE_ID, CANONICAL_SCORER, ds)
                if r.ok()
            }
            if not mine:
                row[ds] = {"mean": None, "annotation": "NA", "n": 0,
                           "p_value": None}
                continue
            accs = [r.target_test_accuracy for r in mine]
            mean = float(np.mean(accs))
            score_matrix[i, j] = mean
            paired_mine, paired_base = [], []
            for r in mine:
                key = (r.shift_id, r.outer_split)
                if key in base:
                    paired_mine.append(r.target_test_accuracy)
                    paired_base.append(base[key])
            annotation = ""
            p_value = None
            if m != BASELINE_ID and len(paired_mine) >= 5:
                p_value, significant, direction = wilcoxon_signed_rank(
                    paired_mine, paired_base, level=level)
                if significant and direction != "none":
                    delta = float(np.mean(paired_mine) - np.mean(paired_base))
                    symbol = "+" if direction == "gain" else "-"
                    annotation = symbol * (2 if abs(delta) >= STRONG_DELTA else 1)
            row[ds] = {"mean": mean, "annotation": annotation,
                       "n": len(mine), "p_value": p_value}
        table[m] = row
    ranks = average_rank(score_matrix)
    return {
        "datasets": datasets,
        "methods": methods,
        "cells": table,
        "selected_scorer": selected,
        "average_rank": {m: float(r) for m, r in zip(methods, ranks)},
    }


def _display(method_id):
    mdef = METHOD_REGISTRY.get(method_id)
    return mdef.display if mdef else method_id


def _format_cell(cell):
    if cell["mean"] is None:
        return "NA"
    text = f"{cell['mean']:.2f}"
    if cell["annotation"]:
        text += f" {cell['annotation']}"
    return text


def table_to_markdown(table):
    cols = table["datasets"]
    lines = ["| Method | " + " | ".join(cols) + " | Selected scorer | Rank |"]
    lines.append("|" + "---|" * (len(cols) + 3))
    for m in table["methods"]:
        cells = [_format_cell(table["cells"][m][ds]) for ds in cols]
        scorer = table["selected_scorer"][m] or ""
        rank = f"{table['average_rank'][m]:.2f}"
        lines.append(
            f"| {_display(m)} | " + " | ".join(cells) +
            f" | {scorer} | {rank} |"
        )
    return "\n".join(lines) + "\n"


def table_to_csv(table):
    buf = io.StringIO()
    writer = csv.writer(buf)
    cols = table["datasets"]
    writer.writerow(["method", *cols, "selected_scorer", "average_rank"])
    for m in table["methods"]:
        row = [m]
        for ds in cols:
            cell = table["cells"][m][ds]
            row.append("" if cell["mean"] is None else f"{cell['mean']:.6f}")
        row.append(table["selected_scorer"][m] or "")
        row.append(f"{table['average_rank'][m]:.6f}")
        writer.writerow(row)
    return buf.getvalue()


def table_to_json(table):
    return json.dumps(table, indent=2, sort_keys=True)


def render_results(records, fmt="markdown", level=0.05):
    """Render the benchmark table in markdown, csv, or json."""
    table = build_table(records, level=level)
    if fmt == "markdown":
        return table_to_markdown(table)
    if fmt == "csv":
        return table_to_csv(table)
    if fmt == "json":
        return table_to_json(table)
    raise errors.ConfigError(f"unknown format {fmt!r}")


def scorer_analysis(records):
    """Correlation between validation scores and target accuracy per scorer.

    Each usable record contributes one point (mean inner score of the
    chosen cell, outer target accuracy); the Pearson coefficient per
    scorer reproduces the scorer-quality analysis of the benchmark.
    """
    if not records:
        raise errors.NoRecords("no records to analyze")
    out = {}
    scorers = sorted({r.scorer_id for r in records})
    for scorer in scorers:
        pts = [
            (r.chosen_inner_score, r.target_test_accuracy)
            for r in records
            if r.scorer_id == scorer and r.ok()
            and r.chosen_inner_score is not None
            and r.target_test_accuracy is not None
        ]
        if len(pts) >= 2:
            x, y = np.asarray(pts).T
            try:
                rho = pearson_r(x, y)
            except errors.ZeroVariance:
                rho = None
        else:
            rho = None
        out[scorer] = {"pearson_r": rho, "n_points": len(pts)}
    return out


def scorer_analysis_report(records, fmt="markdown"):
    analysis = scorer_analysis(records)
    if fmt == "json":
        return json.dumps(analysis, indent=2, sort_keys=True)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["scorer", "pearson_r", "n_points"])
        for scorer, row in analysis.items():
            rho = "" if row["pearson_r"] is None else f"{row['pearson_r']:.4f}"
            writer.writerow([scorer, rho, row["n_points"]])
        return buf.getvalue()
    lines = ["| Scorer | Pearson r | points |", "|---|---|---|"]
    for scorer, row in analysis.items():
        rho = "NA" if row["pearson_r"] is None else f"{row['pearson_r']:.3f}"
        lines.append(f"| {scorer} | {rho} | {row['n_points']} |")
    return "\n".join(lines) + "\n"
