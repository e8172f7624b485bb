import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from regimeflow import artifacts as art
from regimeflow.cli import main

SMALL = [
    "--set", "synth.n_stocks=12", "--set", "synth.n_days=160",
    "--set", "ingest.min_observations=30",
    "--set", "regime.em_max_iter=100",
    "--set", "bootstrap.iterations=50",
]

PIPELINE = ["simulate", "ingest", "filter", "regime", "predict", "asym",
            "backtest", "robust", "report"]


def run_pipeline(out_dir, seed=3, extra=()):
    for cmd in PIPELINE:
        rc = main([cmd, "--out", str(out_dir), "--seed", str(seed),
                   *SMALL, *extra])
        assert rc == 0, f"{cmd} failed"


class TestPipeline:
    def test_full_run_produces_artifacts(self, tmp_path):
        run_pipeline(tmp_path)
        for name in (art.PANEL_CSV, art.FLOWS_CSV, art.AGGREGATE_CSV,
                     art.FILTERED_CSV, art.REGIMES_CSV, art.REGIME_MODEL_JSON,
                     art.PREDICTIVE_CSV, art.ASYMMETRY_CSV, art.EQUITY_CSV,
                     art.METRICS_JSON, art.ROBUSTNESS_JSON, art.REPORT_JSON,
                     art.MANIFEST_JSON):
            assert (tmp_path / name).exists(), name

    def test_artifact_schemas(self, tmp_path):
        run_pipeline(tmp_path)
        regimes = pd.read_csv(tmp_path / art.REGIMES_CSV)
        for col in ("date", "p_bull", "p_normal", "p_crisis", "state",
                    "crisis_flag"):
            assert col in regimes.columns
        probs = regimes[["p_bull", "p_normal", "p_crisis"]].to_numpy()
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        assert set(regimes["state"]) <= {"Bull", "Normal", "Crisis"}

        metrics = art.read_json(tmp_path / art.METRICS_JSON)
        for inv in ("foreign", "institutional", "individual"):
            assert set(metrics[inv]) == {"static_raw", "kalman_filtered",
                                         "all_weather"}
            for v in metrics[inv].values():
                assert "sharpe" in v and "max_drawdown" in v

        equity = pd.read_csv(tmp_path / art.EQUITY_CSV)
        assert set(equity.columns) == {"date", "variant", "equity", "drawdown"}

    def test_ingest_retains_clean_synth_panel(self, tmp_path):
        run_pipeline(tmp_path)
        stats = art.read_json(tmp_path / art.INGEST_STATS_JSON)
        assert stats["rows_read"] == 12 * 160
        assert stats["rows_retained"] == stats["rows_read"]
        assert sum(stats["dropped"].values()) == 0

    def test_manifest_records_all_commands(self, tmp_path):
        run_pipeline(tmp_path)
        manifest = art.read_json(tmp_path / art.MANIFEST_JSON)
        assert set(manifest) == set(PIPELINE)
        for entry in manifest.values():
            assert "config_hash" in entry and "versions" in entry
        digest = manifest["filter"]["inputs"]["flows.csv"]
        assert digest == art.sha256_file(tmp_path / art.FLOWS_CSV)

    def test_deterministic_rerun(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_pipeline(a, seed=9)
        run_pipeline(b, seed=9)
        for name in (art.METRICS_JSON, art.REGIMES_CSV, art.PANEL_CSV):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_seed_env_var_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("REGIMEFLOW_SEED", "17")
        rc = main(["simulate", "--out", str(tmp_path), *SMALL])
        assert rc == 0
        manifest = art.read_json(tmp_path / art.MANIFEST_JSON)
        assert manifest["simulate"]["seed"] == 17

    def test_config_file_and_set_override(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("synth:\n  n_stocks: 4\n  n_days: 40\nseed: 5\n")
        rc = main(["simulate", "--out", str(tmp_path / "run"),
                   "--config", str(cfg), "--set", "synth.n_days=50"])
        assert rc == 0
        panel = pd.read_csv(tmp_path / "run" / art.PANEL_CSV)
        assert panel["stock_id"].nunique() == 4
        assert panel["date"].nunique() == 50


class TestFailureModes:
    def test_report_before_pipeline_exits_one(self, tmp_path):
        assert main(["report", "--out", str(tmp_path)]) == 1

    def test_filter_without_ingest_exits_one(self, tmp_path):
        assert main(["filter", "--out", str(tmp_path)]) == 1

    def test_ingest_missing_panel_exits_one(self, tmp_path):
        assert main(["ingest", "--out", str(tmp_path),
                     "--panel", str(tmp_path / "nope.csv")]) == 1

    def test_ingest_bad_rows_exits_one(self, tmp_path):
        p = tmp_path / "panel.csv"
        p.write_text("date,stock_id,buy_for,sell_for,buy_ins,sell_ins,"
                     "buy_ind,sell_ind,mcap,return\n"
                     "2020-01-01,A,1,1,1,1,1,1,-5,0.0\n")
        assert main(["ingest", "--out", str(tmp_path), "--panel", str(p)]) == 1


class TestTruthRecord:
    def test_truth_json_regenerates_run(self, tmp_path):
        rc = main(["simulate", "--out", str(tmp_path), "--seed", "21", *SMALL])
        assert rc == 0
        truth = art.read_json(tmp_path / art.TRUTH_JSON)
        spec = truth["spec"]
        # re-simulating from the stored spec reproduces the panel exactly
        rc = main(["simulate", "--out", str(tmp_path / "again"),
                   "--seed", str(spec["seed"]),
                   "--set", f"synth.n_stocks={spec['n_stocks']}",
                   "--set", f"synth.n_days={spec['n_days']}"])
        assert rc == 0
        assert ((tmp_path / art.PANEL_CSV).read_bytes()
                == (tmp_path / "again" / art.PANEL_CSV).read_bytes())

    def test_truth_contains_planted_paths(self, tmp_path):
        main(["simulate", "--out", str(tmp_path), "--seed", "2", *SMALL])
        truth = art.read_json(tmp_path / art.TRUTH_JSON)
        assert len(truth["states"]) == 160
        assert len(truth["market_returns"]) == 160
        theta = np.asarray(truth["theta"]["foreign"])
        assert theta.shape == (12, 160)
