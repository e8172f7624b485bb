"""Strategy engine: decile long-short portfolios on raw or filtered flow
signals, regime-scaled All-Weather variant with shock stop-loss, metric
computation, and the subperiod / size-quintile robustness harness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

import numpy as np

from .errors import ZeroVariance


class StrategyVariant(str, Enum):
    STATIC_RAW = "static_raw"
    KALMAN_FILTERED = "kalman_filtered"
    ALL_WEATHER = "all_weather"


@dataclass
class StrategySpec:
    variant: StrategyVariant
    investor: str = "foreign"
    signal_quantile: float = 0.10
    regime_cap: float = 0.6          # p_crisis at which exposure hits zero
    stop_loss: bool = True
    momentum_profile: bool = False   # set from the asymmetry ratio (< 1)
    sign: float = 1.0                # -1 fades the signal


@dataclass
class BacktestReport:
    dates: list
    daily_returns: np.ndarray
    equity: np.ndarray
    total_return: float
    sharpe: float
    calmar: float
    max_drawdown: float
    turnover: float = np.nan
    per_regime_sharpe: Dict[str, float] = field(default_factory=dict)
    zero_variance: bool = False
    calmar_infinite: bool = False


def decile_weights(signals: np.ndarray, quantile: float) -> np.ndarray:
    """Cross-sectional long-short weights for one day.

    Long the top `quantile` fraction, short the bottom, equal weight, each
    side summing to 1 gross. NaN signals get zero weight. A degenerate
    cross-section (all signals equal) gets no positions.
    """
    w = np.zeros_like(signals)
    valid = np.isfinite(signals)
    vals = signals[valid]
    if len(vals) < 2 or np.ptp(vals) == 0:
        return w
    lo, hi = np.quantile(vals, [quantile, 1.0 - quantile])
    long_mask = valid & (signals >= hi)
    short_mask = valid & (signals <= lo)
    if long_mask.any():
        w[long_mask] = 1.0 / long_mask.sum()
    if short_mask.any():
        w[short_mask] -= 1.0 / short_mask.sum()
    return w


def build_positions(
    signals: np.ndarray,
    spec: StrategySpec,
    p_crisis: Optional[np.ndarray] = None,
    neg_shock: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Daily weight matrix (T, n_stocks) formed at each t's close.

    Weights at t are held over the t -> t+1 return. All-Weather scales by
    g(p_crisis) = max(0, 1 - p_crisis / regime_cap) and, when the driving
    investor has a momentum-type shock profile, cuts positions to zero for
    one day after a negative market shock day.
    """
    signals = np.asarray(signals, dtype=float)
    T, n = signals.shape
    weights = np.empty((T, n))
    for t in range(T):
        weights[t] = spec.sign * decile_weights(signals[t], spec.signal_quantile)
    if spec.variant is StrategyVariant.ALL_WEATHER:
        if p_crisis is not None:
            g = np.maximum(0.0, 1.0 - np.asarray(p_crisis, float) / spec.regime_cap)
            weights *= g[:, None]
        if spec.stop_loss and spec.momentum_profile and neg_shock is not None:
            weights[np.asarray(neg_shock, bool)] = 0.0
    return weights


def strategy_returns(weights: np.ndarray, stock_returns: np.ndarray) -> np.ndarray:
    """Daily P&L: weights at t applied to stock returns at t+1; length T-1."""
    w = np.asarray(weights, dtype=float)
    r = np.asarray(stock_returns, dtype=float)
    nxt = r[1:]
    out = np.where(np.isfinite(nxt), w[:-1] * nxt, 0.0).sum(axis=1)
    return out


def compute_metrics(
    daily_returns: np.ndarray,
    dates: Optional[list] = None,
    annualization: int = 252,
    states: Optional[np.ndarray] = None,
    state_labels: Optional[Dict[int, str]] = None,
) -> BacktestReport:
    r = np.asarray(daily_returns, dtype=float)
    if len(r) == 0:
        raise ValueError("empty return series")
    equity = np.cumprod(1.0 + r)
    peak = np.maximum.accumulate(np.concatenate([[1.0], equity]))
    dd = 1.0 - np.concatenate([[1.0], equity]) / peak
    max_dd = float(dd.max())
    total = float(equity[-1] - 1.0)
    years = len(r) / annualization
    ann_ret = (1.0 + total) ** (1.0 / years) - 1.0 if years > 0 else np.nan
    sd = r.std(ddof=1) if len(r) > 1 else 0.0
    zero_var = sd == 0.0
    sharpe = float(r.mean() / sd * np.sqrt(annualization)) if not zero_var else np.nan
    calmar_inf = max_dd == 0.0
    calmar = float(ann_ret / max_dd) if max_dd > 0 else np.inf
    report = BacktestReport(
        dates=list(dates) if dates is not None else list(range(len(r))),
        daily_returns=r, equity=equity, total_return=total, sharpe=sharpe,
        calmar=calmar, max_drawdown=max_dd,
        zero_variance=zero_var, calmar_infinite=calmar_inf,
    )
    if states is not None and state_labels is not None:
        for idx, label in state_labels.items():
            mask = np.asarray(states)[: len(r)] == idx
            seg = r[mask]
            if len(seg) > 1 and seg.std(ddof=1) > 0:
                report.per_regime_sharpe[label] = float(
                    seg.mean() / seg.std(ddof=1) * np.sqrt(annualization))
            else:
                report.per_regime_sharpe[label] = np.nan
    return report


def run_backtest(
    signals: np.ndarray,
    stock_returns: np.ndarray,
    spec: StrategySpec,
    dates: Optional[list] = None,
    p_crisis: Optional[np.ndarray] = None,
    neg_shock: Optional[np.ndarray] = None,
    annualization: int = 252,
    states: Optional[np.ndarray] = None,
    state_labels: Optional[Dict[int, str]] = None,
) -> BacktestReport:
    weights = build_positions(signals, spec, p_crisis=p_crisis, neg_shock=neg_shock)
    rets = strategy_returns(weights, stock_returns)
    turn = float(np.abs(np.diff(weights, axis=0)).sum(axis=1).mean()) if len(weights) > 1 else np.nan
    report = compute_metrics(rets, dates=dates[1:] if dates is not None else None,
                             annualization=annualization, states=states,
                             state_labels=state_labels)
    report.turnover = turn
    return report


@dataclass
class RobustnessReport:
    by_year: Dict[str, dict]
    by_quintile: Dict[str, dict]


def run_robustness(
    signals: np.ndarray,
    stock_returns: np.ndarray,
    spec: StrategySpec,
    dates: list,
    market_caps: np.ndarray,
    p_crisis: Optional[np.ndarray] = None,
    neg_shock: Optional[np.ndarray] = None,
    annualization: int = 252,
) -> RobustnessReport:
    """Per-calendar-year metrics and size-quintile strategy runs.

    Quintiles are formed on the prior-month median market cap per stock
    (first month uses the first available caps); bucket membership
    partitions the live universe.
    """
    weights = build_positions(signals, spec, p_crisis=p_crisis, neg_shock=neg_shock)
    rets = strategy_returns(weights, stock_returns)
    ret_dates = dates[1:]

    by_year = {}
    years = sorted({d[:4] for d in ret_dates})
    darr = np.array([d[:4] for d in ret_dates])
    for y in years:
        seg = rets[darr == y]
        if len(seg) == 0:
            continue
        m = compute_metrics(seg, annualization=annualization)
        by_year[y] = {"sharpe": m.sharpe, "calmar": m.calmar,
                      "max_drawdown": m.max_drawdown, "n": int(len(seg))}

    by_quintile = {}
    bucket = quintile_membership(dates, np.asarray(market_caps, dtype=float))
    for q in range(5):
        masked = np.where(bucket == q, signals, np.nan)
        if not np.isfinite(masked).any():
            continue
        sub = run_backtest(masked, stock_returns, spec,
                           p_crisis=p_crisis, neg_shock=neg_shock,
                           annualization=annualization)
        by_quintile[f"Q{q + 1}"] = {
            "sharpe": sub.sharpe, "calmar": sub.calmar,
            "max_drawdown": sub.max_drawdown,
            "n_stocks": int(np.unique(np.where(bucket == q)[1]).size),
        }
    return RobustnessReport(by_year=by_year, by_quintile=by_quintile)


def quintile_membership(dates: list, market_caps: np.ndarray) -> np.ndarray:
    """(T, n) bucket ids 0..4 (0 = smallest caps), refreshed monthly from
    the prior month's median market cap; the first month uses day-one caps.
    """
    T, n = market_caps.shape
    months = [d[:7] for d in dates]
    uniq = sorted(set(months))
    month_rows = {m: [i for i, mm in enumerate(months) if mm == m] for m in uniq}
    bucket = np.zeros((T, n), dtype=int)
    prev_med = market_caps[0]
    for m in uniq:
        med = prev_med
        qs = np.nanquantile(med, [0.2, 0.4, 0.6, 0.8])
        ids = np.digitize(med, qs)
        bucket[month_rows[m]] = ids
        prev_med = np.nanmedian(market_caps[month_rows[m]], axis=0)
    return bucket
