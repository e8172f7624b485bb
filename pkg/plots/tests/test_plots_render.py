import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from regimeflow_plots import (
    FIGURE_KINDS, FigureSpec, SchemaMismatch, render, render_all,
)
from regimeflow_plots.cli import main as render_main
from regimeflow_plots.figures import crisis_spans, shaded_fraction


@pytest.fixture(scope="session")
def run_dir(tmp_path_factory):
    """A seeded pipeline run produced by the upstream CLI binary.

    Invoked as a subprocess: the renderer consumes only the on-disk
    artifacts, never the pipeline's Python API.
    """
    out = tmp_path_factory.mktemp("run")
    args = ["--out", str(out), "--seed", "8",
            "--set", "synth.n_stocks=12", "--set", "synth.n_days=400",
            "--set", "ingest.min_observations=30"]
    for cmd in ("simulate", "ingest", "filter", "regime", "asym", "backtest"):
        subprocess.run([sys.executable, "-m", "regimeflow.cli", cmd, *args],
                       check=True)
    return out


class TestCrisisSpans:
    def test_empty_flag_no_spans(self):
        assert crisis_spans(np.zeros(10)) == []
        assert shaded_fraction(np.zeros(10)) == 0.0

    def test_contiguous_blocks(self):
        flag = np.array([0, 1, 1, 0, 0, 1, 1, 1, 0, 1])
        assert crisis_spans(flag) == [(1, 3), (5, 8), (9, 10)]
        assert shaded_fraction(flag) == pytest.approx(0.6)

    def test_all_on(self):
        assert crisis_spans(np.ones(5)) == [(0, 5)]


class TestRender:
    def test_all_five_kinds_render(self, run_dir, tmp_path):
        written = render_all(run_dir, tmp_path)
        assert len(written) == 2 * len(FIGURE_KINDS)
        for kind in FIGURE_KINDS:
            assert (tmp_path / f"{kind}.png").stat().st_size > 0
            assert (tmp_path / f"{kind}.svg").stat().st_size > 0

    def test_crisis_shading_matches_occupancy(self, run_dir, tmp_path):
        truth = json.loads((run_dir / "truth.json").read_text())
        occupancy = np.mean(np.asarray(truth["states"]) == 2)
        regimes = pd.read_csv(run_dir / "regimes.csv")
        frac = shaded_fraction(regimes["crisis_flag"].to_numpy())
        render(FigureSpec(kind="regime_timeline", run_dir=run_dir,
                          out_path=tmp_path / "fig"))
        assert abs(frac - occupancy) < 0.03

    def test_flat_zero_crisis_no_shading(self, tmp_path):
        T = 50
        pd.DataFrame({
            "date": [f"2020-01-{i % 28 + 1:02d}" for i in range(T)],
            "p_bull": np.full(T, 0.6), "p_normal": np.full(T, 0.4),
            "p_crisis": np.zeros(T), "state": ["Bull"] * T,
            "crisis_flag": np.zeros(T, dtype=int),
        }).to_csv(tmp_path / "regimes.csv", index=False)
        out = render(FigureSpec(kind="regime_timeline", run_dir=tmp_path,
                                out_path=tmp_path / "fig"))
        assert all(p.exists() for p in out)

    def test_equity_three_variants(self, run_dir, tmp_path):
        df = pd.read_csv(run_dir / "equity.csv")
        assert df["variant"].nunique() == 3
        out = render(FigureSpec(kind="cumulative_returns", run_dir=run_dir,
                                out_path=tmp_path / "eq"))
        assert all(p.exists() for p in out)

    def test_rerender_byte_stable(self, run_dir, tmp_path):
        a = render(FigureSpec(kind="drawdown", run_dir=run_dir,
                              out_path=tmp_path / "a"))
        b = render(FigureSpec(kind="drawdown", run_dir=run_dir,
                              out_path=tmp_path / "b"))
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_does_not_mutate_inputs(self, run_dir, tmp_path):
        before = {p.name: p.read_bytes() for p in run_dir.iterdir()
                  if p.is_file()}
        render_all(run_dir, tmp_path)
        after = {p.name: p.read_bytes() for p in run_dir.iterdir()
                 if p.is_file()}
        assert before == after


class TestSchemaMismatch:
    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaMismatch, match="regimes.csv"):
            render(FigureSpec(kind="regime_timeline", run_dir=tmp_path,
                              out_path=tmp_path / "fig"))

    def test_missing_columns_named(self, tmp_path):
        pd.DataFrame({"date": ["2020-01-01"], "p_bull": [1.0]}) \
            .to_csv(tmp_path / "regimes.csv", index=False)
        with pytest.raises(SchemaMismatch) as exc:
            render(FigureSpec(kind="regime_timeline", run_dir=tmp_path,
                              out_path=tmp_path / "fig"))
        msg = str(exc.value)
        for col in ("p_normal", "p_crisis", "state", "crisis_flag"):
            assert col in msg

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(SchemaMismatch, match="unknown figure kind"):
            render(FigureSpec(kind="heatmap", run_dir=tmp_path,
                              out_path=tmp_path / "fig"))


class TestCli:
    def test_exit_codes(self, run_dir, tmp_path):
        assert render_main([str(run_dir), str(tmp_path / "imgs")]) == 0
        assert render_main([str(tmp_path / "empty"), str(tmp_path / "x")]) == 1
