"""On-disk artifact schemas shared by the CLI stages and the renderer.

All tables are CSV with headers; model objects are JSON written with
sorted keys so identical runs produce byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

PANEL_CSV = "panel.csv"
TRUTH_JSON = "truth.json"
FLOWS_CSV = "flows.csv"
AGGREGATE_CSV = "aggregate.csv"
INGEST_STATS_JSON = "ingest_stats.json"
FILTERED_CSV = "filtered.csv"
REGIMES_CSV = "regimes.csv"
REGIME_MODEL_JSON = "regime_model.json"
PREDICTIVE_CSV = "predictive.csv"
ASYMMETRY_CSV = "asymmetry.csv"
EQUITY_CSV = "equity.csv"
METRICS_JSON = "metrics.json"
ROBUSTNESS_JSON = "robustness.json"
MANIFEST_JSON = "run.json"
REPORT_JSON = "report.json"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def update_manifest(out_dir, command, config_dict, seed, inputs):
    """Record config hash, seed, versions and input digests under run.json."""
    import regimeflow

    out_dir = Path(out_dir)
    path = out_dir / MANIFEST_JSON
    manifest = read_json(path) if path.exists() else {}
    cfg_hash = hashlib.sha256(
        json.dumps(_jsonable(config_dict), sort_keys=True).encode()).hexdigest()
    manifest[command] = {
        "config_hash": cfg_hash,
        "seed": seed,
        "versions": {
            "regimeflow": regimeflow.__version__,
            "numpy": np.__version__,
        },
        "inputs": {str(Path(p).name): sha256_file(p) for p in inputs if Path(p).exists()},
    }
    write_json(path, manifest)
