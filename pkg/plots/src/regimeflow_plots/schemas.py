"""Artifact schema checks for the renderer.

Each figure declares the CSV columns it needs; a missing file or column
raises SchemaMismatch naming exactly what is absent, before any drawing
happens.
"""
from __future__ import annotations

from pathlib import Path

import pandas as pd


class SchemaMismatch(Exception):
    """An input artifact is missing or lacks required columns."""


REQUIRED_COLUMNS = {
    "regimes.csv": ["date", "p_bull", "p_normal", "p_crisis", "state",
                    "crisis_flag"],
    "flows.csv": ["date", "stock_id", "sigma"],
    "filtered.csv": ["date", "stock_id", "investor", "gain"],
    "asymmetry.csv": ["Investor", "beta_plus", "beta_minus", "Ratio"],
    "equity.csv": ["date", "variant", "equity", "drawdown"],
}


def load_table(run_dir, name: str) -> pd.DataFrame:
    path = Path(run_dir) / name
    if not path.exists():
        raise SchemaMismatch(f"{name}: file not found in {run_dir}")
    df = pd.read_csv(path)
    required = REQUIRED_COLUMNS.get(name, [])
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaMismatch(f"{name}: missing columns {missing}")
    return df
