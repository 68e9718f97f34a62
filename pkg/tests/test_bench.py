import dataclasses
import json
import os

import numpy as np
import pytest

from dabench import errors, estimators
from dabench.bench import (
    BenchConfig,
    build_table,
    load_config,
    read_records,
    render_results,
    run_nested_cv,
    scorer_analysis,
    select_best_scorer,
    write_records,
)
from dabench.bench.cli import main as cli_main
from dabench.bench.config import TrialRecord
from dabench.bench.methods import expand_grid, get_method

BASE = {"kind": "kernel-logistic", "l2": 1e-4, "gamma": 1.0}


def tiny_config(**kw):
    defaults = dict(
        datasets=[{"kind": "simulated", "shift": "conditional",
                   "n_source": 120, "n_target": 120, "seed": 3}],
        methods=["train_src", "train_tgt", "coral"],
        n_outer=2, n_inner=2, seed=0, timeout_seconds=600,
        base_estimator=dict(BASE),
    )
    defaults.update(kw)
    return BenchConfig(**defaults)


class TestGrids:
    def test_expand_cartesian_and_linked(self):
        cells = expand_grid({"a": [1, 2], "b__c": [(3, 4), (5, 6)], "d": 7})
        assert len(cells) == 4
        assert cells[0] == {"a": 1, "b": 3, "c": 4, "d": 7}

    def test_default_grids_match_protocol(self):
        sizes = {
            "dens_rw": 7, "disc_rw": 2, "gauss_rw": 1, "kliep": 10, "kmm": 9,
            "nn_rw": 2, "mmd_tars": 9, "coral": 2, "map_ot": 3, "ent_ot": 9,
            "class_reg_ot": 9, "lin_ot": 10, "mmd_ls": 5, "jpca": 7, "sa": 7,
            "tca": 14, "tsl": 21, "jdot": 5, "ot_label_prop": 9, "dasvm": 1,
        }
        for mid, expected in sizes.items():
            assert len(expand_grid(get_method(mid).grid)) == expected, mid

    def test_unknown_method(self):
        with pytest.raises(errors.ConfigError):
            get_method("nope")
        with pytest.raises(errors.ConfigError, match="XGBoost"):
            get_method("xgb_rw")


class TestRunner:
    @pytest.fixture(scope="class")
    def run(self):
        cfg = tiny_config()
        records, diag = run_nested_cv(cfg)
        return cfg, records, diag

    def test_record_counts(self, run):
        cfg, records, diag = run
        assert len(records) == 3 * cfg.n_outer * len(cfg.scorers)
        assert diag["n_units"] == 3
        assert diag["n_fits"] > 0

    def test_grid_of_one_constant_params(self, run):
        _, records, _ = run
        base_params = [json.dumps(r.chosen_params, sort_keys=True)
                       for r in records if r.method_id == "train_src"]
        assert len(set(base_params)) == 1

    def test_baseline_metrics_scorer_invariant(self, run):
        _, records, _ = run
        for outer in (0, 1):
            accs = {r.target_test_accuracy for r in records
                    if r.method_id == "train_src" and r.outer_split == outer}
            assert len(accs) == 1

    def test_determinism_across_worker_counts(self, run):
        cfg, records, _ = run
        cfg2 = tiny_config(workers=2)
        records2, _ = run_nested_cv(cfg2)
        a = [r.to_json() for r in records]
        b = [json.loads(r.to_json()) for r in records2]
        a = [json.loads(s) for s in a]
        for x in a + b:
            x.pop("fit_seconds")
        assert a == b

    def test_masked_labels_never_influence_unsupervised_choice(self):
        # with splits held fixed (label-blind splitter), permuting the hidden
        # target labels may move only the supervised scorer's inner choices;
        # every unsupervised scorer must pick identical cells and scores
        from dabench.bench import runner as runner_mod
        from dabench.core import DomainDataset, stratified_split

        blind = lambda labels, ratio, n, seed: stratified_split(
            np.zeros(len(labels), dtype=int), ratio, n, seed)

        orig_split = runner_mod.stratified_split
        orig_build = runner_mod._build_dataset

        def poisoned(entry):
            ds = orig_build(entry)
            labels = ds.labels.copy()
            tgt = ~ds.is_source
            rng = np.random.default_rng(99)
            labels[tgt] = rng.permutation(labels[tgt])
            return DomainDataset(features=ds.features, labels=labels,
                                 domain=ds.domain, name=ds.name,
                                 shift_id=ds.shift_id)

        runner_mod.stratified_split = blind
        try:
            ref_records, _ = run_nested_cv(tiny_config())
            runner_mod._build_dataset = poisoned
            poi_records, _ = run_nested_cv(tiny_config())
        finally:
            runner_mod.stratified_split = orig_split
            runner_mod._build_dataset = orig_build

        def keyed(recs):
            return {
                (r.method_id, r.scorer_id, r.outer_split):
                    (json.dumps(r.chosen_params, sort_keys=True),
                     r.chosen_inner_score)
                for r in recs if r.method_id != "train_tgt"
            }

        ref, poi = keyed(ref_records), keyed(poi_records)
        changed = {k for k in ref if ref[k] != poi[k]}
        assert changed, "poisoning must at least move the supervised scorer"
        assert all(k[1] == "Supervised" for k in changed)

    def test_failures_recorded_not_raised(self):
        # DASVM on a 3-class dataset fails every cell but the run completes
        cfg = tiny_config(methods=["train_src", "dasvm"])
        cfg.datasets = [{"kind": "simulated", "shift": "conditional",
                         "n_source": 120, "n_target": 120, "seed": 3}]
        from dabench.bench import runner as runner_mod

        orig = runner_mod._build_dataset

        def three_class(entry):
            ds = orig(entry)
            labels = ds.labels.copy()
            labels[::7] = 2
            from dabench.core import DomainDataset

            return DomainDataset(features=ds.features, labels=labels,
                                 domain=ds.domain, name=ds.name,
                                 shift_id=ds.shift_id)

        runner_mod._build_dataset = three_class
        try:
            records, _ = run_nested_cv(cfg)
        finally:
            runner_mod._build_dataset = orig
        dasvm = [r for r in records if r.method_id == "dasvm"]
        assert dasvm and all(r.failed for r in dasvm)
        assert any("NotBinary" in r.fail_reason for r in dasvm)
        src = [r for r in records if r.method_id == "train_src"]
        assert all(r.ok() for r in src)


class TestTimeoutAndCache:
    def test_forced_timeout_yields_na_cells(self, tmp_path):
        cfg = tiny_config(methods=["train_src", "coral"],
                          force_timeout=("coral",))
        records, _ = run_nested_cv(cfg)
        coral = [r for r in records if r.method_id == "coral"]
        assert coral and all(r.timed_out for r in coral)
        table = build_table(records)
        assert table["cells"]["coral"]["sim_conditional"]["mean"] is None
        text = render_results(records)
        assert "NA" in text

    def test_wall_clock_timeout(self):
        cfg = tiny_config(methods=["train_src", "kliep"], timeout_seconds=0.01)
        records, _ = run_nested_cv(cfg)
        assert all(r.timed_out for r in records)

    def test_cache_replay_zero_fits_identical_records(self, tmp_path):
        cache = str(tmp_path / "cache")
        cfg = tiny_config(cache_dir=cache)
        records1, diag1 = run_nested_cv(cfg)
        assert diag1["n_fits"] > 0
        cfg2 = tiny_config(cache_dir=cache)
        records2, diag2 = run_nested_cv(cfg2)
        assert diag2["n_fits"] == 0
        assert [r.to_json() for r in records1] == [r.to_json() for r in records2]
        assert render_results(records1) == render_results(records2)

    def test_cache_keyed_by_method_grid(self, tmp_path):
        cache = str(tmp_path / "cache")
        cfg = tiny_config(cache_dir=cache, methods=["train_src"])
        run_nested_cv(cfg)
        files = os.listdir(cache)
        cfg2 = tiny_config(
            cache_dir=cache,
            methods=["train_src", {"id": "coral", "grid": {"assume_centered":
                                                           [False],
                                                           "reg": ["auto"]}}],
        )
        _, diag = run_nested_cv(cfg2)
        files2 = os.listdir(cache)
        assert len(files2) == len(files) + 1  # only the new method ran

    def test_cache_env_override(self, tmp_path, monkeypatch):
        env_cache = str(tmp_path / "env_cache")
        monkeypatch.setenv("DABENCH_CACHE", env_cache)
        cfg = tiny_config(methods=["train_src"], cache_dir=None)
        run_nested_cv(cfg)
        assert os.listdir(env_cache)


class TestRecordsIO:
    def test_round_trip(self, tmp_path):
        rec = TrialRecord(dataset="d", shift_id="s", method_id="m",
                          scorer_id="IW", outer_split=0,
                          chosen_params={"a": 1.5},
                          target_test_accuracy=0.5, source_test_accuracy=0.6,
                          target_test_f1=0.4, chosen_inner_score=0.7)
        path = tmp_path / "records.jsonl"
        write_records([rec], path)
        back = read_records(path)
        assert back[0].to_json() == rec.to_json()


class TestResults:
    def make_records(self, method_acc, n=12, scorers=("IW", "CircV",
                                                      "Supervised")):
        rng = np.random.default_rng(0)
        records = []
        for method, acc in method_acc.items():
            for scorer in scorers:
                for i in range(n):
                    noise = rng.normal(0, 0.003)
                    records.append(TrialRecord(
                        dataset="ds", shift_id=f"shift{i % 3}", method_id=method,
                        scorer_id=scorer, outer_split=i // 3,
                        chosen_params={}, target_test_accuracy=acc + noise,
                        source_test_accuracy=0.9, target_test_f1=acc,
                        chosen_inner_score=acc + rng.normal(0, 0.01)))
        return records

    def test_missing_baseline(self):
        records = self.make_records({"coral": 0.8})
        with pytest.raises(errors.MissingBaseline):
            build_table(records)

    def test_uniform_gain_significant(self):
        records = self.make_records({"train_src": 0.6, "coral": 0.7})
        table = build_table(records)
        cell = table["cells"]["coral"]["ds"]
        assert cell["annotation"] == "++"
        assert table["cells"]["train_src"]["ds"]["annotation"] == ""

    def test_select_best_scorer_dominance_and_ties(self):
        records = self.make_records({"train_src": 0.6, "coral": 0.7})
        # degrade IW records for coral so CircV dominates
        for r in records:
            if r.method_id == "coral" and r.scorer_id == "IW":
                r.target_test_accuracy -= 0.2
        assert select_best_scorer(records, "coral") == "CircV"
        assert select_best_scorer(records, "train_src") is None

    def test_select_best_scorer_tie_precedence(self):
        records = self.make_records({"train_src": 0.6, "coral": 0.7})
        for r in records:
            r.target_test_accuracy = 0.5  # exact ties
        assert select_best_scorer(records, "coral") == "CircV"

    def test_csv_json_round_trip(self):
        records = self.make_records({"train_src": 0.6, "coral": 0.7})
        as_json = json.loads(render_results(records, fmt="json"))
        table = build_table(records)
        assert as_json["average_rank"] == table["average_rank"]
        csv_text = render_results(records, fmt="csv")
        assert "coral" in csv_text and "train_src" in csv_text

    def test_scorer_analysis_fields(self):
        records = self.make_records({"train_src": 0.6, "coral": 0.7})
        out = scorer_analysis(records)
        assert set(out) == {"IW", "CircV", "Supervised"}
        for row in out.values():
            assert row["n_points"] == 24


class TestConfigAndCLI:
    def test_load_json_config(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "datasets": [{"kind": "simulated", "shift": "covariate",
                          "n_source": 60, "n_target": 60}],
            "methods": ["train_src"],
            "n_outer": 1, "n_inner": 2,
            "base_estimator": BASE,
        }))
        cfg = load_config(path)
        assert cfg.n_outer == 1

    def test_load_toml_config(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(
            'methods = ["train_src"]\nn_outer = 1\nn_inner = 2\n'
            '[[datasets]]\nkind = "simulated"\nshift = "covariate"\n'
            'n_source = 60\nn_target = 60\n'
            '[base_estimator]\nkind = "kernel-logistic"\nl2 = 1e-4\n'
            'gamma = 1.0\n'
        )
        cfg = load_config(path)
        assert cfg.datasets[0]["shift"] == "covariate"

    def test_bad_config_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"methods": ["train_src"], "datasets": [],
                                    "bogus": 1}))
        with pytest.raises(errors.ConfigError):
            load_config(path)

    def test_cli_run_table_analysis(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        records_path = tmp_path / "records.jsonl"
        cfg_path.write_text(json.dumps({
            "datasets": [{"kind": "simulated", "shift": "covariate",
                          "n_source": 80, "n_target": 80, "seed": 1}],
            "methods": ["train_src", "train_tgt", "nn_rw"],
            "n_outer": 1, "n_inner": 2,
            "base_estimator": BASE,
            "records_path": str(records_path),
        }))
        assert cli_main(["run", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "records" in out
        assert records_path.exists()
        assert cli_main(["table", "--records", str(records_path)]) == 0
        assert "Train Src" in capsys.readouterr().out
        assert cli_main(["scorer-analysis", "--records", str(records_path)]) == 0
        assert "Pearson" in capsys.readouterr().out
        assert cli_main(["datasets", "--list"]) == 0
        assert "covariate" in capsys.readouterr().out

    def test_cli_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        assert cli_main(["run", "--config", str(bad)]) == 2

    def test_cli_ok_with_per_trial_failures(self, tmp_path, capsys):
        # DASVM fails on 3-class data; exit code stays 0
        csv_path = tmp_path / "three.csv"
        rng = np.random.default_rng(0)
        lines = ["f1,f2,label,domain"]
        for i in range(90):
            dom = "source" if i < 45 else "target"
            cls = i % 3
            x = rng.normal(cls, 0.3, 2)
            lines.append(f"{x[0]},{x[1]},{cls},{dom}")
        csv_path.write_text("\n".join(lines))
        cfg_path = tmp_path / "cfg.json"
        records_path = tmp_path / "records.jsonl"
        cfg_path.write_text(json.dumps({
            "datasets": [{"kind": "csv", "path": str(csv_path),
                          "name": "three"}],
            "methods": ["train_src", "dasvm"],
            "n_outer": 1, "n_inner": 2,
            "base_estimator": BASE,
            "records_path": str(records_path),
        }))
        assert cli_main(["run", "--config", str(cfg_path)]) == 0
        records = read_records(records_path)
        assert any(r.failed for r in records)
