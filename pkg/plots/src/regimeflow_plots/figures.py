"""The five figure kinds rendered from a run directory.

regime_timeline   : filtered regime probabilities with crisis shading
gain_vs_vol       : Kalman gain against realized volatility
asymmetry_bars    : buy/sell shock-response coefficients per investor
cumulative_returns: equity curves for the three strategy variants
drawdown          : drawdown paths for the three strategy variants
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# fixed hash salt so SVG element ids (and thus whole files) are
# reproducible across renders
plt.rcParams["svg.hashsalt"] = "regimeflow-plots"
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .schemas import SchemaMismatch, load_table  # noqa: E402

VARIANT_LABELS = {
    "static_raw": "Raw signal",
    "kalman_filtered": "Filtered signal",
    "all_weather": "All-weather",
}


@dataclass
class FigureSpec:
    kind: str
    run_dir: Path
    out_path: Path
    title: Optional[str] = None
    labels: Dict[str, str] = field(default_factory=dict)


def crisis_spans(crisis_flag: np.ndarray):
    """Contiguous [start, end) index spans where the crisis flag is set."""
    flag = np.asarray(crisis_flag).astype(bool)
    spans = []
    start = None
    for i, f in enumerate(flag):
        if f and start is None:
            start = i
        elif not f and start is not None:
            spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(flag)))
    return spans


def shaded_fraction(crisis_flag) -> float:
    """Fraction of the timeline covered by crisis shading."""
    flag = np.asarray(crisis_flag).astype(bool)
    return float(flag.mean()) if len(flag) else 0.0


def _finish(fig, spec: FigureSpec):
    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out.with_suffix(".png"), dpi=150)
    # drop the creation-date metadata so re-renders are byte-stable
    fig.savefig(out.with_suffix(".svg"), metadata={"Date": None})
    plt.close(fig)
    return [out.with_suffix(".png"), out.with_suffix(".svg")]


def regime_timeline(spec: FigureSpec):
    df = load_table(spec.run_dir, "regimes.csv")
    x = np.arange(len(df))
    fig, ax = plt.subplots(figsize=(10, 4))
    for col, label in (("p_bull", "Bull"), ("p_normal", "Normal"),
                       ("p_crisis", "Crisis")):
        ax.plot(x, df[col], label=label, linewidth=1.0)
    for a, b in crisis_spans(df["crisis_flag"].to_numpy()):
        ax.axvspan(a, b, color="red", alpha=0.15, linewidth=0)
    step = max(len(df) // 8, 1)
    ax.set_xticks(x[::step])
    ax.set_xticklabels(df["date"].iloc[::step], rotation=30, ha="right",
                       fontsize=8)
    ax.set_ylim(-0.02, 1.02)
    ax.set_ylabel("Filtered probability")
    ax.set_title(spec.title or "Regime probabilities (crisis periods shaded)")
    ax.legend(loc="upper left", fontsize=8)
    return _finish(fig, spec)


def gain_vs_vol(spec: FigureSpec):
    filt = load_table(spec.run_dir, "filtered.csv")
    flows = load_table(spec.run_dir, "flows.csv")
    merged = filt.merge(flows[["date", "stock_id", "sigma"]],
                        on=["date", "stock_id"], how="inner")
    fig, ax = plt.subplots(figsize=(7, 5))
    for inv, g in merged.groupby("investor"):
        g = g.sort_values("sigma")
        # bin-average for a readable curve over the scatter
        bins = np.linspace(g["sigma"].min(), g["sigma"].max(), 25)
        which = np.digitize(g["sigma"], bins)
        mean_g = g.groupby(which)["gain"].mean()
        mean_s = g.groupby(which)["sigma"].mean()
        ax.plot(mean_s, mean_g, marker="o", markersize=3, label=inv)
    ax.set_xlabel("Realized volatility")
    ax.set_ylabel("Kalman gain")
    ax.set_title(spec.title or "Kalman gain versus market volatility")
    ax.legend(fontsize=8)
    return _finish(fig, spec)


def asymmetry_bars(spec: FigureSpec):
    df = load_table(spec.run_dir, "asymmetry.csv")
    idx = np.arange(len(df))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(idx - width / 2, df["beta_plus"], width,
           label="After positive shock")
    ax.bar(idx + width / 2, df["beta_minus"], width,
           label="After negative shock")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(idx)
    ax.set_xticklabels(df["Investor"])
    ax.set_ylabel("Flow response coefficient")
    ax.set_title(spec.title or "Asymmetric flow response to market shocks")
    ax.legend(fontsize=8)
    return _finish(fig, spec)


def cumulative_returns(spec: FigureSpec):
    df = load_table(spec.run_dir, "equity.csv")
    fig, ax = plt.subplots(figsize=(10, 4.5))
    for variant, g in df.groupby("variant"):
        g = g.sort_values("date")
        ax.plot(np.arange(len(g)), g["equity"],
                label=VARIANT_LABELS.get(variant, variant), linewidth=1.2)
    ax.set_ylabel("Equity (growth of 1)")
    ax.set_xlabel("Trading day")
    ax.set_title(spec.title or "Cumulative returns by strategy variant")
    ax.legend(fontsize=8)
    return _finish(fig, spec)


def drawdown(spec: FigureSpec):
    df = load_table(spec.run_dir, "equity.csv")
    fig, ax = plt.subplots(figsize=(10, 4.5))
    for variant, g in df.groupby("variant"):
        g = g.sort_values("date")
        ax.plot(np.arange(len(g)), -g["drawdown"],
                label=VARIANT_LABELS.get(variant, variant), linewidth=1.2)
    ax.set_ylabel("Drawdown")
    ax.set_xlabel("Trading day")
    ax.set_title(spec.title or "Drawdown by strategy variant")
    ax.legend(fontsize=8)
    return _finish(fig, spec)


FIGURE_KINDS = {
    "regime_timeline": regime_timeline,
    "gain_vs_vol": gain_vs_vol,
    "asymmetry_bars": asymmetry_bars,
    "cumulative_returns": cumulative_returns,
    "drawdown": drawdown,
}


def render(spec: FigureSpec):
    """Render one figure; returns the list of written image paths."""
    if spec.kind not in FIGURE_KINDS:
        raise SchemaMismatch(f"unknown figure kind: {spec.kind}")
    return FIGURE_KINDS[spec.kind](spec)


def render_all(run_dir, out_dir):
    """Render every figure kind from run_dir into out_dir (PNG + SVG)."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    written = []
    for kind in FIGURE_KINDS:
        spec = FigureSpec(kind=kind, run_dir=run_dir,
                          out_path=out_dir / kind)
        written.extend(render(spec))
    return written
