import json
import os

import numpy as np
import pytest

from aggrex.blackbox import load_model
from aggrex.cli import (
    ConfigError,
    cmd_aggregate,
    cmd_explain,
    cmd_report,
    cmd_sweep,
    cmd_train,
    load_config,
    main,
    run_dir_for,
)


def small_config(output_dir, **extra):
    cfg = {
        "seed": 11,
        "output_dir": str(output_dir),
        "dataset": {"synth": {"n": 16, "m_cont": 2, "m_bin": 2, "classes": 3, "relevant": [0, 2]}},
        "blackbox": {"n_trees": 5},
        "sampler": {"N": 200, "radii": [1.5]},
        "filter": {"variant": "filtered"},
        "aggregate": {"budgets": [1, 2, 3], "floors": [0.5, 0.9], "solver": "both"},
    }
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


class TestConfig:
    def test_round_trip_lossless(self, tmp_path):
        path = write_config(tmp_path, small_config(tmp_path))
        cfg = load_config(str(path), {})
        echo = tmp_path / "echo.json"
        echo.write_text(json.dumps(cfg), encoding="utf-8")
        assert load_config(str(echo), {}) == cfg

    def test_flags_win_over_file(self, tmp_path):
        path = write_config(tmp_path, small_config(tmp_path))
        cfg = load_config(str(path), {"seed": 99})
        assert cfg["seed"] == 99

    def test_env_seed_override(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, small_config(tmp_path))
        monkeypatch.setenv("AGGREX_SEED", "123")
        cfg = load_config(str(path), {})
        assert cfg["seed"] == 123

    def test_bad_floor_rejected(self, tmp_path):
        bad = small_config(tmp_path, aggregate={"budgets": [1], "floors": [1.5], "solver": "both"})
        path = write_config(tmp_path, bad)
        with pytest.raises(ConfigError):
            load_config(str(path), {})

    def test_exit_code_2_on_config_error(self, tmp_path, capsys):
        bad = small_config(tmp_path, aggregate={"budgets": [], "floors": [0.5], "solver": "both"})
        path = write_config(tmp_path, bad)
        assert main(["train", "--config", str(path)]) == 2
        assert "config error" in capsys.readouterr().err


class TestTrainStage:
    def test_model_file_reloadable_and_identical(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path))
        model_path = cmd_train(cfg)
        assert model_path.exists()
        model = load_model(model_path)
        assert model.kind == "bagged_forest"
        from aggrex.cli import prepare_dataset

        data = prepare_dataset(cfg)
        again = load_model(model_path)
        assert np.array_equal(model.predict_batch(data.X), again.predict_batch(data.X))

    def test_n_trees_default_50(self):
        cfg = load_config(None, {"dataset": {"synth": {"n": 8, "m_cont": 2, "m_bin": 0, "classes": 2, "relevant": [0]}}})
        assert cfg["blackbox"]["n_trees"] == 50

    def test_rerun_byte_identical(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path))
        first = cmd_train(cfg).read_bytes()
        second = cmd_train(cfg).read_bytes()
        assert first == second


class TestExplainStage:
    def test_record_counts_single_variant(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path))
        cmd_train(cfg)
        bundle_path = cmd_explain(cfg)
        bundle = json.loads(bundle_path.read_text())
        assert len(bundle["explainers"]) == 16  # one per point, one radius, filtered only

    def test_record_counts_both_variants_paired(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path, filter={"variant": "both"}))
        cmd_train(cfg)
        bundle = json.loads(cmd_explain(cfg).read_text())
        assert len(bundle["explainers"]) == 32
        by_center = {}
        for rec in bundle["explainers"]:
            by_center.setdefault(rec["center_index"], []).append(rec["filtered"])
        assert all(sorted(v) == [False, True] for v in by_center.values())

    def test_bundle_fields(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path))
        cmd_train(cfg)
        bundle = json.loads(cmd_explain(cfg).read_text())
        rec = bundle["explainers"][0]
        assert {"center_index", "radius", "filtered", "selected_features", "leaf_count", "train_fidelity", "tree"} <= set(rec)

    def test_median_selected_features_small_on_planted_data(self, tmp_path):
        # labels depend on two binary features only, and the forest separates
        # them cleanly, so the filter keeps explainer feature sets small
        cfg = load_config(
            None,
            small_config(
                tmp_path,
                dataset={"synth": {"n": 40, "m_cont": 3, "m_bin": 3, "classes": 4, "relevant": [3, 5]}},
                blackbox={"n_trees": 10},
                sampler={"N": 500, "radii": [2.0]},
            ),
        )
        cmd_train(cfg)
        bundle = json.loads(cmd_explain(cfg).read_text())
        sizes = sorted(len(rec["selected_features"]) for rec in bundle["explainers"])
        assert sizes[len(sizes) // 2] <= 5


class TestAggregateStage:
    def run_pipeline(self, tmp_path, **extra):
        cfg = load_config(None, small_config(tmp_path, **extra))
        cmd_train(cfg)
        cmd_explain(cfg)
        sweep_path = cmd_aggregate(cfg)
        return cfg, sweep_path

    def read_rows(self, sweep_path):
        lines = sweep_path.read_text().strip().splitlines()
        header = lines[0].split(",")
        return [dict(zip(header, ln.split(","))) for ln in lines[1:]]

    def test_sweep_monotone_and_dominance(self, tmp_path):
        cfg, sweep_path = self.run_pipeline(tmp_path)
        rows = self.read_rows(sweep_path)
        assert len(rows) == 3 * 2 * 2  # budgets x floors x solvers
        for phi in ("0.5", "0.9"):
            exact_by_k = [int(r["ip_coverage"]) for r in rows if r["solver"] == "exact" and r["phi"] == phi]
            assert exact_by_k == sorted(exact_by_k)
            for k in ("1", "2", "3"):
                exact = next(r for r in rows if r["solver"] == "exact" and r["phi"] == phi and r["K"] == k)
                greedy = next(r for r in rows if r["solver"] == "greedy" and r["phi"] == phi and r["K"] == k)
                assert int(exact["ip_coverage"]) >= int(greedy["ip_coverage"])

    def test_high_floor_rows_meet_floor(self, tmp_path):
        cfg, sweep_path = self.run_pipeline(tmp_path)
        for row in self.read_rows(sweep_path):
            if row["phi"] == "0.9" and row["min_fidelity"]:
                assert float(row["min_fidelity"]) >= 0.9

    def test_solution_json_reverifies(self, tmp_path):
        from aggrex.aggregate import build_pool, verify_solution, AggregateSolution
        from aggrex.cli import prepare_dataset, _load_bundle_explainers
        from aggrex.blackbox import load_model as load_bb

        cfg, sweep_path = self.run_pipeline(tmp_path)
        rd = run_dir_for(cfg)
        data = prepare_dataset(cfg)
        model = load_bb(rd / "model.txt")
        explainers = _load_bundle_explainers(cfg, data)
        pool = build_pool(data, explainers, model)
        for sol_file in sorted((rd / "solutions").glob("sol_*.json")):
            payload = json.loads(sol_file.read_text())
            sol = AggregateSolution(
                selected=tuple(payload["selected"]),
                z_assignment={int(i): tuple(js) for i, js in payload["z_assignment"].items()},
                ip_coverage=payload["ip_coverage"],
                ball_coverage=payload["ball_coverage"],
                ball_min_fidelity=payload["ball_min_fidelity"],
                claimed_min_fidelity=payload["claimed_min_fidelity"],
                status=payload["status"],
            )
            k = int(sol_file.name.split("_K")[1].split("_")[0])
            phi = float(sol_file.name.split("_phi")[1].rsplit("_", 1)[0])
            assert verify_solution(pool, k, phi, sol) == []

    def test_lp_export_flag(self, tmp_path):
        cfg, _ = self.run_pipeline(tmp_path, aggregate={"budgets": [2], "floors": [0.7], "solver": "exact", "export_lp": True})
        rd = run_dir_for(cfg)
        assert list((rd / "solutions").glob("model_*.lp"))

    def test_unfiltered_variant_aggregates_unfiltered(self, tmp_path):
        cfg, sweep_path = self.run_pipeline(tmp_path, filter={"variant": "unfiltered"})
        assert sweep_path.exists()
        assert len(self.read_rows(sweep_path)) == 3 * 2 * 2


class TestReportStage:
    def test_series_counts_and_monotone_x(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path))
        cmd_sweep(cfg)
        paths = cmd_report(cfg)
        rd = run_dir_for(cfg)
        cov = (rd / "report_ip_coverage.csv").read_text().strip().splitlines()
        header = cov[0].split(",")
        assert header[0] == "K"
        assert len(header) - 1 == 4  # 2 solvers x 2 floors
        ks = [int(ln.split(",")[0]) for ln in cov[1:]]
        assert ks == sorted(ks) and len(set(ks)) == len(ks)

    def test_regeneration_identical_bytes(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path))
        cmd_sweep(cfg)
        cmd_report(cfg)
        rd = run_dir_for(cfg)
        first = (rd / "report_ip_coverage.csv").read_bytes()
        cmd_report(cfg)
        assert (rd / "report_ip_coverage.csv").read_bytes() == first

    def test_missing_sweep_reports_absent_file(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path))
        with pytest.raises(ConfigError, match="missing inputs"):
            cmd_report(cfg)


class TestCsvDatasetPath:
    def test_pipeline_from_csv_file(self, tmp_path):
        from aggrex.data import synth_multiclass, write_dataset

        raw = synth_multiclass(seed=5, n=14, m_cont=2, m_bin=2, classes=3, relevant=(0, 2))
        csv_path = tmp_path / "points.csv"
        write_dataset(raw, csv_path)
        cfg = load_config(
            None,
            small_config(
                tmp_path,
                dataset={
                    "path": str(csv_path),
                    "synth": None,
                    "schema": {"m_cont": 2, "m_bin": 2},
                },
            ),
        )
        cmd_train(cfg)
        cmd_explain(cfg)
        sweep_path = cmd_aggregate(cfg)
        assert sweep_path.exists()
        rows = sweep_path.read_text().strip().splitlines()[1:]
        assert len(rows) == 3 * 2 * 2

    def test_path_without_schema_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="schema"):
            load_config(
                None,
                small_config(tmp_path, dataset={"path": "x.csv", "synth": None}),
            )


class TestManifest:
    def test_manifest_tracks_stage_outputs(self, tmp_path):
        cfg = load_config(None, small_config(tmp_path))
        cmd_sweep(cfg)
        rd = run_dir_for(cfg)
        manifest = json.loads((rd / "manifest.json").read_text())
        assert {"train", "explain", "aggregate"} <= set(manifest["stages"])
        assert "model.txt" in manifest["hashes"]
        assert "sweep.csv" in manifest["hashes"]
        assert "timings.csv" in manifest["unhashed"]
        assert manifest["seed"] == cfg["seed"]

    def test_run_dir_depends_on_config(self, tmp_path):
        cfg_a = load_config(None, small_config(tmp_path))
        cfg_b = load_config(None, small_config(tmp_path, seed=12))
        assert run_dir_for(cfg_a) != run_dir_for(cfg_b)


class TestMainEntry:
    def test_full_sweep_via_main(self, tmp_path, capsys):
        path = write_config(tmp_path, small_config(tmp_path))
        assert main(["sweep", "--config", str(path)]) == 0
        assert main(["report", "--config", str(path)]) == 0

    def test_flag_overrides_reach_pipeline(self, tmp_path):
        path = write_config(tmp_path, small_config(tmp_path))
        assert main(["train", "--config", str(path), "--n-trees", "3"]) == 0
        cfg = load_config(str(path), {"blackbox": {"n_trees": 3}})
        model = load_model(run_dir_for(cfg) / "model.txt")
        assert len(model.trees) == 3
