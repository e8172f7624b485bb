"""Command-line pipeline: simulate -> ingest -> filter -> regime ->
predict / asym -> backtest -> robust -> report.

All commands share one run directory; each reads the artifacts of its
upstream stage from there and records a manifest entry in run.json.
Configuration is a YAML file with sections; --set key=value flags and the
REGIMEFLOW_SEED environment variable override file values.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import artifacts as art
from .data_model import InvestorType, RunConfig
from .errors import MissingArtifact, RegimeflowError, ValidationError
from . import backtest as bt
from . import econometrics as econ
from . import ingest as ing
from . import kalman as kal
from . import regime as reg
from . import synth

INVESTOR_KEY = {
    InvestorType.FOREIGN: "foreign",
    InvestorType.INSTITUTIONAL: "institutional",
    InvestorType.INDIVIDUAL: "individual",
}


def load_config(path=None, sets=(), env=None):
    env = os.environ if env is None else env
    raw = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    for item in sets or ():
        key, _, val = item.partition("=")
        cur = raw
        parts = key.split(".")
        for p in parts[:-1]:
            cur = cur.setdefault(p, {})
        cur[parts[-1]] = yaml.safe_load(val)
    if "REGIMEFLOW_SEED" in env:
        raw["seed"] = int(env["REGIMEFLOW_SEED"])
    return raw


def run_config_from(raw: dict) -> RunConfig:
    kal_c = raw.get("kalman", {})
    reg_c = raw.get("regime", {})
    asym_c = raw.get("asymmetry", {})
    bt_c = raw.get("backtest", {})
    ing_c = raw.get("ingest", {})
    return RunConfig(
        phi=kal_c.get("phi", 0.95), q=kal_c.get("q", 1e-8),
        r0=kal_c.get("r0", 1e-6), gamma=kal_c.get("gamma", 1.0),
        ewma_decay=kal_c.get("ewma_decay", 0.94),
        n_regimes=reg_c.get("n_regimes", 3),
        crisis_threshold=reg_c.get("crisis_threshold", 0.30),
        em_max_iter=reg_c.get("em_max_iter", 500),
        em_tol=float(reg_c.get("em_tol", 1e-6)),
        shock_multiple=asym_c.get("shock_multiple", 2.0),
        signal_quantile=bt_c.get("signal_quantile", 0.10),
        regime_cap=bt_c.get("regime_cap", 0.6),
        annualization=bt_c.get("annualization", 252),
        stop_loss=bt_c.get("stop_loss", True),
        winsor_lower=ing_c.get("winsor_lower", 0.01),
        winsor_upper=ing_c.get("winsor_upper", 0.99),
        min_observations=ing_c.get("min_observations", 60),
        seed=raw.get("seed", 0),
    )


def synth_spec_from(raw: dict) -> synth.SynthSpec:
    c = dict(raw.get("synth", {}))
    if "asymmetry" in c:
        c["asymmetry"] = {InvestorType(k): tuple(v) for k, v in c["asymmetry"].items()}
    for key in ("mu", "sigma", "beta"):
        if key in c:
            c[key] = np.asarray(c[key], dtype=float)
    if "transition" in c:
        c["transition"] = np.asarray(c["transition"], dtype=float)
    if "cap_range" in c:
        c["cap_range"] = tuple(c["cap_range"])
    c.setdefault("seed", raw.get("seed", 0))
    return synth.SynthSpec(**c)


def _require(out_dir, *names):
    missing = [n for n in names if not (Path(out_dir) / n).exists()]
    if missing:
        raise MissingArtifact(f"missing artifacts in {out_dir}: {missing}")


# ---------------------------------------------------------------- commands

def cmd_simulate(raw, out_dir):
    spec = synth_spec_from(raw)
    rows, truth = synth.generate_panel(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recs = []
    for o in rows:
        recs.append({
            "date": o.date, "stock_id": o.stock_id,
            "buy_for": o.buy_value[InvestorType.FOREIGN],
            "sell_for": o.sell_value[InvestorType.FOREIGN],
            "buy_ins": o.buy_value[InvestorType.INSTITUTIONAL],
            "sell_ins": o.sell_value[InvestorType.INSTITUTIONAL],
            "buy_ind": o.buy_value[InvestorType.INDIVIDUAL],
            "sell_ind": o.sell_value[InvestorType.INDIVIDUAL],
            "mcap": o.market_cap, "return": o.close_return,
        })
    pd.DataFrame(recs, columns=ing.CSV_COLUMNS).to_csv(out / art.PANEL_CSV, index=False)
    spec_dict = asdict(spec)
    spec_dict["asymmetry"] = {INVESTOR_KEY[k]: list(v) for k, v in spec.asymmetry.items()}
    art.write_json(out / art.TRUTH_JSON, {
        "spec": spec_dict,
        "states": truth.states,
        "market_returns": truth.market_returns,
        "theta": {INVESTOR_KEY[k]: v for k, v in truth.theta.items()},
        "signal_scale": truth.signal_scale,
        "dates": truth.dates,
        "stock_ids": truth.stock_ids,
    })
    art.update_manifest(out, "simulate", raw, spec.seed, [])
    return 0


def cmd_ingest(raw, out_dir, panel_path=None):
    out = Path(out_dir)
    panel_path = Path(panel_path) if panel_path else out / art.PANEL_CSV
    if not panel_path.exists():
        raise MissingArtifact(f"panel CSV not found: {panel_path}")
    config = run_config_from(raw)
    rows = ing.read_panel_csv(panel_path)
    series, aggregate, stats = ing.build_flow_series(rows, config)

    recs = []
    for fs in series.values():
        for t in range(len(fs)):
            rec = {"date": fs.dates[t], "stock_id": fs.stock_id,
                   "return": fs.returns[t], "sigma": fs.realized_vol[t],
                   "sigma_bar": fs.vol_baseline[t]}
            for inv in InvestorType.all():
                rec[f"flow_{INVESTOR_KEY[inv]}"] = fs.s_mc[inv][t]
            recs.append(rec)
    pd.DataFrame(recs).to_csv(out / art.FLOWS_CSV, index=False)

    agg = {"date": list(aggregate.dates), "return": aggregate.returns,
           "sigma": aggregate.realized_vol, "sigma_bar": aggregate.vol_baseline}
    for inv in InvestorType.all():
        agg[f"flow_{INVESTOR_KEY[inv]}"] = aggregate.s_mc[inv]
    pd.DataFrame(agg).to_csv(out / art.AGGREGATE_CSV, index=False)

    art.write_json(out / art.INGEST_STATS_JSON, {
        "rows_read": stats.rows_read, "rows_retained": stats.rows_retained,
        "dropped": stats.dropped, "stocks_retained": stats.stocks_retained,
        "date_min": stats.date_min, "date_max": stats.date_max,
    })
    art.update_manifest(out, "ingest", raw, config.seed, [panel_path])
    return 0


def cmd_filter(raw, out_dir):
    out = Path(out_dir)
    _require(out, art.FLOWS_CSV)
    config = run_config_from(raw)
    params = kal.KalmanParams(phi=config.phi, q=config.q, r0=config.r0,
                              gamma=config.gamma)
    df = pd.read_csv(out / art.FLOWS_CSV, dtype={"stock_id": str})
    pieces = []
    for stock_id, g in df.groupby("stock_id", sort=True):
        g = g.sort_values("date")
        for inv in InvestorType.all():
            key = INVESTOR_KEY[inv]
            res = kal.filter_series(g[f"flow_{key}"].to_numpy(),
                                    g["sigma"].to_numpy(),
                                    g["sigma_bar"].to_numpy(), params)
            pieces.append(pd.DataFrame({
                "date": g["date"].to_numpy(), "stock_id": stock_id,
                "investor": key, "raw": g[f"flow_{key}"].to_numpy(),
                "filtered": res.filtered, "gain": res.gain, "r_t": res.r_t,
            }))
    pd.concat(pieces, ignore_index=True).to_csv(out / art.FILTERED_CSV, index=False)
    art.update_manifest(out, "filter", raw, config.seed, [out / art.FLOWS_CSV])
    return 0


def cmd_regime(raw, out_dir):
    out = Path(out_dir)
    _require(out, art.AGGREGATE_CSV)
    config = run_config_from(raw)
    agg = pd.read_csv(out / art.AGGREGATE_CSV)
    returns = agg["return"].to_numpy()
    model = reg.fit_em(returns, n_regimes=config.n_regimes, tol=config.em_tol,
                       max_iter=config.em_max_iter, seed=config.seed)
    path = reg.hamilton_filter(returns, model, crisis_threshold=config.crisis_threshold)
    smoothed = reg.kim_smoother(path, model)
    by_label = {lab: i for i, lab in model.labels.items()}
    pd.DataFrame({
        "date": agg["date"],
        "p_bull": path.filtered[:, by_label[reg.BULL]],
        "p_normal": path.filtered[:, by_label[reg.NORMAL]],
        "p_crisis": path.filtered[:, by_label[reg.CRISIS]],
        "sp_bull": smoothed[:, by_label[reg.BULL]],
        "sp_normal": smoothed[:, by_label[reg.NORMAL]],
        "sp_crisis": smoothed[:, by_label[reg.CRISIS]],
        "state": [model.labels[s] for s in path.states],
        "crisis_flag": path.crisis_flag.astype(int),
    }).to_csv(out / art.REGIMES_CSV, index=False)
    art.write_json(out / art.REGIME_MODEL_JSON, {
        "mu": model.mu, "sigma": model.sigma, "transition": model.transition,
        "loglik": model.loglik,
        "labels": {str(k): v for k, v in model.labels.items()},
        "separation_flag": model.separation_flag, "tie_flag": model.tie_flag,
    })
    art.update_manifest(out, "regime", raw, config.seed, [out / art.AGGREGATE_CSV])
    return 0


def _signal_frames(out):
    """Wide per-investor raw/filtered signal frames plus return frame."""
    df = pd.read_csv(out / art.FILTERED_CSV, dtype={"stock_id": str})
    flows = pd.read_csv(out / art.FLOWS_CSV, dtype={"stock_id": str})
    returns = flows.pivot(index="date", columns="stock_id", values="return").sort_index()
    raws, filts = {}, {}
    for key, g in df.groupby("investor"):
        raws[key] = g.pivot(index="date", columns="stock_id", values="raw").sort_index()
        filts[key] = g.pivot(index="date", columns="stock_id", values="filtered").sort_index()
    return raws, filts, returns


def cmd_predict(raw, out_dir, horizons=(1, 5, 20)):
    out = Path(out_dir)
    _require(out, art.FLOWS_CSV, art.FILTERED_CSV)
    config = run_config_from(raw)
    raws, filts, returns = _signal_frames(out)
    rows = []
    for key in sorted(raws):
        for h in horizons:
            growth = (1.0 + returns).cumprod()
            fwd = growth.shift(-h) / growth - 1.0  # r_{t+1..t+h}
            sig_r = raws[key]
            sig_f = filts[key]
            mask = sig_r.notna() & sig_f.notna() & fwd.notna()
            y = fwd.to_numpy()[mask.to_numpy()]
            xr = sig_r.to_numpy()[mask.to_numpy()]
            xf = sig_f.to_numpy()[mask.to_numpy()]
            fr = econ.pooled_ols(y, xr[:, None])
            ff = econ.pooled_ols(y, xf[:, None])
            imp = ((abs(ff.t_stats[1]) - abs(fr.t_stats[1])) / abs(fr.t_stats[1])
                   if fr.t_stats[1] != 0 else np.nan)
            rows.append({"Investor": key, "Horizon": h,
                         "t_raw": fr.t_stats[1], "t_filtered": ff.t_stats[1],
                         "R2_raw": fr.r2, "R2_filtered": ff.r2,
                         "Improvement": imp})
    pd.DataFrame(rows).to_csv(out / art.PREDICTIVE_CSV, index=False)
    art.update_manifest(out, "predict", raw, config.seed,
                        [out / art.FLOWS_CSV, out / art.FILTERED_CSV])
    return 0


def _market_shocks(out, config):
    agg = pd.read_csv(out / art.AGGREGATE_CSV)
    pos, neg, mag = econ.shock_indicators(agg["return"].to_numpy(),
                                          agg["sigma"].to_numpy(),
                                          config.shock_multiple)
    return agg["date"].tolist(), pos, neg, mag


def cmd_asym(raw, out_dir):
    out = Path(out_dir)
    _require(out, art.FLOWS_CSV, art.AGGREGATE_CSV)
    config = run_config_from(raw)
    dates, pos, neg, mag = _market_shocks(out, config)
    shock = pd.DataFrame({"date": dates, "pos": pos, "neg": neg, "mag": mag})
    flows = pd.read_csv(out / art.FLOWS_CSV, dtype={"stock_id": str})
    rows = []
    for inv in InvestorType.all():
        key = INVESTOR_KEY[inv]
        d = flows.sort_values(["stock_id", "date"]).copy()
        d["dS"] = d.groupby("stock_id")[f"flow_{key}"].diff()
        d = d.dropna(subset=["dS"]).merge(shock, on="date", how="inner")
        fit = econ.asymmetry_fit(d["dS"].to_numpy(), d["pos"].to_numpy(),
                                 d["neg"].to_numpy(), d["mag"].to_numpy(),
                                 investor=key)
        rows.append({"Investor": key, "beta_plus": fit.beta_pos,
                     "t_plus": fit.t_pos, "beta_minus": fit.beta_neg,
                     "t_minus": fit.t_neg, "Ratio": fit.ratio,
                     "Wald": fit.wald_stat, "p_value": fit.p_value})
    pd.DataFrame(rows).to_csv(out / art.ASYMMETRY_CSV, index=False)
    art.update_manifest(out, "asym", raw, config.seed,
                        [out / art.FLOWS_CSV, out / art.AGGREGATE_CSV])
    return 0


def _strategy_inputs(out, raw):
    config = run_config_from(raw)
    raws, filts, returns = _signal_frames(out)
    regimes = pd.read_csv(out / art.REGIMES_CSV)
    p_crisis = regimes.set_index("date")["p_crisis"].reindex(returns.index).fillna(0.0)
    _, pos, neg, mag = _market_shocks(out, config)
    agg_dates = pd.read_csv(out / art.AGGREGATE_CSV)["date"]
    neg_s = pd.Series(neg, index=agg_dates).reindex(returns.index).fillna(0.0)
    ratios = {}
    asym_path = out / art.ASYMMETRY_CSV
    if asym_path.exists():
        a = pd.read_csv(asym_path)
        ratios = dict(zip(a["Investor"], a["Ratio"]))
    return config, raws, filts, returns, p_crisis.to_numpy(), neg_s.to_numpy(), ratios


def _run_variant(variant, investor, raws, filts, returns, config, p_crisis,
                 neg_shock, ratios, sign):
    sig = raws[investor] if variant is bt.StrategyVariant.STATIC_RAW else filts[investor]
    ratio = ratios.get(investor, np.nan)
    momentum = bool(np.isfinite(ratio) and 0.0 <= ratio < 1.0)
    spec = bt.StrategySpec(variant=variant, investor=investor,
                           signal_quantile=config.signal_quantile,
                           regime_cap=config.regime_cap,
                           stop_loss=config.stop_loss,
                           momentum_profile=momentum, sign=sign)
    return bt.run_backtest(sig.to_numpy(), returns.to_numpy(), spec,
                           dates=list(returns.index),
                           p_crisis=p_crisis, neg_shock=neg_shock,
                           annualization=config.annualization)


def cmd_backtest(raw, out_dir):
    out = Path(out_dir)
    _require(out, art.FLOWS_CSV, art.FILTERED_CSV, art.REGIMES_CSV, art.AGGREGATE_CSV)
    config, raws, filts, returns, p_crisis, neg_shock, ratios = _strategy_inputs(out, raw)
    bt_c = raw.get("backtest", {})
    sign = float(bt_c.get("sign", 1.0))
    metrics = {}
    equity_rows = []
    main_investor = bt_c.get("investor", "foreign")
    for investor in sorted(raws):
        metrics[investor] = {}
        for variant in bt.StrategyVariant:
            rep = _run_variant(variant, investor, raws, filts, returns, config,
                               p_crisis, neg_shock, ratios, sign)
            metrics[investor][variant.value] = {
                "total_return": rep.total_return, "sharpe": rep.sharpe,
                "calmar": rep.calmar if np.isfinite(rep.calmar) else None,
                "max_drawdown": rep.max_drawdown, "turnover": rep.turnover,
            }
            if investor == main_investor:
                peak = np.maximum.accumulate(rep.equity)
                for d, e, pk in zip(rep.dates, rep.equity, peak):
                    equity_rows.append({"date": d, "variant": variant.value,
                                        "equity": e, "drawdown": 1.0 - e / pk})
    pd.DataFrame(equity_rows).to_csv(out / art.EQUITY_CSV, index=False)
    art.write_json(out / art.METRICS_JSON, metrics)
    art.update_manifest(out, "backtest", raw, config.seed,
                        [out / art.FILTERED_CSV, out / art.REGIMES_CSV])
    return 0


def cmd_robust(raw, out_dir):
    out = Path(out_dir)
    _require(out, art.FLOWS_CSV, art.FILTERED_CSV, art.REGIMES_CSV,
             art.AGGREGATE_CSV, art.PANEL_CSV)
    config, raws, filts, returns, p_crisis, neg_shock, ratios = _strategy_inputs(out, raw)
    bt_c = raw.get("backtest", {})
    investor = bt_c.get("investor", "foreign")
    sign = float(bt_c.get("sign", 1.0))
    ratio = ratios.get(investor, np.nan)
    spec = bt.StrategySpec(
        variant=bt.StrategyVariant.ALL_WEATHER, investor=investor,
        signal_quantile=config.signal_quantile, regime_cap=config.regime_cap,
        stop_loss=config.stop_loss,
        momentum_profile=bool(np.isfinite(ratio) and 0.0 <= ratio < 1.0), sign=sign)
    panel = pd.read_csv(out / art.PANEL_CSV, dtype={"stock_id": str})
    caps = panel.pivot(index="date", columns="stock_id", values="mcap") \
        .reindex(index=returns.index, columns=returns.columns)
    rob = bt.run_robustness(filts[investor].to_numpy(), returns.to_numpy(), spec,
                            list(returns.index), caps.to_numpy(),
                            p_crisis=p_crisis, neg_shock=neg_shock,
                            annualization=config.annualization)
    weights = bt.build_positions(filts[investor].to_numpy(), spec,
                                 p_crisis=p_crisis, neg_shock=neg_shock)
    daily = bt.strategy_returns(weights, returns.to_numpy())
    ann = config.annualization
    boot = {}
    block = int(raw.get("bootstrap", {}).get("block_length", 10))
    iters = int(raw.get("bootstrap", {}).get("iterations", 1000))
    if len(daily) >= 10 * block:
        sharpe = lambda x: x.mean() / x.std(ddof=1) * np.sqrt(ann)
        res = econ.bootstrap_ci(sharpe, daily, iterations=iters,
                                block_length=block, seed=config.seed, name="sharpe")
        boot["sharpe"] = {"point": res.point, "ci": [res.ci_lower, res.ci_upper],
                          "iterations": res.iterations, "block_length": res.block_length}

        def calmar(x):
            m = bt.compute_metrics(x, annualization=ann)
            return m.calmar if np.isfinite(m.calmar) else np.nan

        res = econ.bootstrap_ci(calmar, daily, iterations=iters,
                                block_length=block, seed=config.seed + 1, name="calmar")
        boot["calmar"] = {"point": res.point, "ci": [res.ci_lower, res.ci_upper],
                          "iterations": res.iterations, "block_length": res.block_length}
    art.write_json(out / art.ROBUSTNESS_JSON, {
        "by_year": rob.by_year, "by_quintile": rob.by_quintile, "bootstrap": boot,
    })
    art.update_manifest(out, "robust", raw, config.seed, [out / art.FILTERED_CSV])
    return 0


def cmd_report(raw, out_dir):
    out = Path(out_dir)
    _require(out, art.METRICS_JSON, art.REGIMES_CSV, art.PREDICTIVE_CSV,
             art.ASYMMETRY_CSV, art.ROBUSTNESS_JSON)
    payload = {
        "metrics": art.read_json(out / art.METRICS_JSON),
        "robustness": art.read_json(out / art.ROBUSTNESS_JSON),
        "artifacts": sorted(p.name for p in out.iterdir() if p.is_file()),
    }
    art.write_json(out / art.REPORT_JSON, payload)
    art.update_manifest(out, "report", raw, raw.get("seed", 0),
                        [out / art.METRICS_JSON])
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "filter": cmd_filter,
    "regime": cmd_regime,
    "predict": cmd_predict,
    "asym": cmd_asym,
    "backtest": cmd_backtest,
    "robust": cmd_robust,
    "report": cmd_report,
}


def build_parser():
    p = argparse.ArgumentParser(prog="regimeflow",
                                description="Regime-aware order-flow pipeline")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", default=None, help="YAML config file")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--panel", default=None, help="panel CSV (ingest only)")
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config value")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None,
                   help="cap worker parallelism (advisory)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config, args.sets)
        if args.seed is not None:
            raw["seed"] = args.seed
        kwargs = {}
        if args.command == "ingest" and args.panel:
            kwargs["panel_path"] = args.panel
        return COMMANDS[args.command](raw, args.out, **kwargs)
    except (ValidationError, MissingArtifact) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RegimeflowError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
