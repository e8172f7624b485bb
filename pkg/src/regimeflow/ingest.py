"""Panel ingestion: CSV parsing, flow normalization, realized volatility,
winsorization, per-stock series construction and the market aggregate.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np

from .data_model import FlowSeries, InvestorType, PanelObservation, RunConfig, validate_panel
from .errors import EmptyAfterFilters, SeriesTooShort, UnparseableDate, ValidationError

CSV_COLUMNS = [
    "date", "stock_id",
    "buy_for", "sell_for", "buy_ins", "sell_ins", "buy_ind", "sell_ind",
    "mcap", "return",
]

_COL_MAP = {
    InvestorType.FOREIGN: ("buy_for", "sell_for"),
    InvestorType.INSTITUTIONAL: ("buy_ins", "sell_ins"),
    InvestorType.INDIVIDUAL: ("buy_ind", "sell_ind"),
}

VOL_SEED_WINDOW = 20

MARKET_ID = "__MARKET__"


@dataclass
class IngestStats:
    rows_read: int = 0
    dropped: Dict[str, int] = field(default_factory=dict)
    stocks_retained: int = 0
    date_min: str = ""
    date_max: str = ""

    @property
    def rows_retained(self):
        return self.rows_read - sum(self.dropped.values())

    def drop(self, reason: str, n: int = 1):
        self.dropped[reason] = self.dropped.get(reason, 0) + n


def read_panel_csv(path) -> list:
    """Parse the panel CSV into PanelObservation rows (unvalidated order)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"panel CSV missing columns: {missing}")
        for i, rec in enumerate(reader):
            try:
                rows.append(
                    PanelObservation(
                        date=rec["date"],
                        stock_id=rec["stock_id"],
                        buy_value={inv: float(rec[b]) for inv, (b, _) in _COL_MAP.items()},
                        sell_value={inv: float(rec[s]) for inv, (_, s) in _COL_MAP.items()},
                        market_cap=float(rec["mcap"]),
                        close_return=float(rec["return"]),
                    )
                )
            except UnparseableDate as exc:
                raise UnparseableDate(exc.raw, row_index=i) from None
    return rows


def normalize_flow(obs: PanelObservation, investor: InvestorType) -> float:
    """Net buy value over prior-day market cap."""
    return (obs.buy_value[investor] - obs.sell_value[investor]) / obs.market_cap


def realized_vol(returns: np.ndarray, decay: float) -> np.ndarray:
    """EWMA volatility, causal: sigma_t uses returns through t-1 only.

    Seed window: over the first VOL_SEED_WINDOW points sigma2_t is the
    expanding sample variance of returns[:t] (the first two points reuse
    the t=2 value, there being no prior information). From the end of the
    window on, sigma2_t = decay * sigma2_{t-1} + (1 - decay) * r_{t-1}^2.
    """
    returns = np.asarray(returns, dtype=float)
    n = len(returns)
    if n < 2:
        raise SeriesTooShort(f"need at least 2 returns, got {n}")
    w = min(VOL_SEED_WINDOW, n)
    sig2 = np.empty(n)
    for t in range(2, w + 1):
        if t < n:
            sig2[t] = float(np.var(returns[:t]))
    sig2[0] = sig2[1] = float(np.var(returns[:2])) if n == 2 else sig2[2]
    for t in range(w + 1, n):
        sig2[t] = decay * sig2[t - 1] + (1.0 - decay) * returns[t - 1] ** 2
    return np.sqrt(sig2)


def vol_baseline(sigma: np.ndarray, mode: str = "expanding") -> np.ndarray:
    """Average volatility per t.

    "expanding" (default): trailing mean of sigma through t-1, seeded with
    sigma_0 at t=0 so the baseline is always causal and positive.
    "full": full-sample mean broadcast to every t (static research fit).
    """
    sigma = np.asarray(sigma, dtype=float)
    if len(sigma) == 0:
        raise ValidationError("empty volatility series")
    if mode == "full":
        return np.full_like(sigma, sigma.mean())
    if mode != "expanding":
        raise ValidationError(f"unknown vol_baseline mode {mode!r}")
    out = np.empty_like(sigma)
    out[0] = sigma[0]
    if len(sigma) > 1:
        out[1:] = np.cumsum(sigma[:-1]) / np.arange(1, len(sigma))
    return out


def winsorize(series: np.ndarray, lower: float, upper: float) -> np.ndarray:
    """Clamp to the empirical [lower, upper] quantiles; (0, 1) disables."""
    if not (0 <= lower < upper <= 1):
        raise ValidationError(f"bad winsor quantiles ({lower}, {upper})")
    series = np.asarray(series, dtype=float)
    if lower == 0.0 and upper == 1.0:
        return series.copy()
    lo, hi = np.quantile(series, [lower, upper])
    return np.clip(series, lo, hi)


def build_flow_series(
    panel: Iterable[PanelObservation],
    config: RunConfig = RunConfig(),
    baseline_mode: str = "expanding",
) -> Tuple[Dict[str, FlowSeries], FlowSeries, IngestStats]:
    """Per-stock FlowSeries plus market aggregate and accounting stats.

    The aggregate uses value-weighted mean returns (prior-day caps as
    weights) and equal-weighted mean flows across stocks present each day.
    """
    panel = validate_panel(list(panel))
    stats = IngestStats(rows_read=len(panel))
    stats.date_min = min(o.date for o in panel)
    stats.date_max = max(o.date for o in panel)

    by_stock: Dict[str, list] = {}
    for obs in panel:
        by_stock.setdefault(obs.stock_id, []).append(obs)

    series: Dict[str, FlowSeries] = {}
    for stock_id, obs_list in by_stock.items():
        if len(obs_list) < config.min_observations:
            stats.drop("below_min_observations", len(obs_list))
            continue
        dates = tuple(o.date for o in obs_list)
        returns = np.array([o.close_return for o in obs_list])
        sigma = realized_vol(returns, config.ewma_decay)
        baseline = vol_baseline(sigma, mode=baseline_mode)
        s_mc = {}
        for inv in InvestorType.all():
            raw = np.array([normalize_flow(o, inv) for o in obs_list])
            s_mc[inv] = winsorize(raw, config.winsor_lower, config.winsor_upper)
        series[stock_id] = FlowSeries(
            stock_id=stock_id, dates=dates, s_mc=s_mc,
            returns=returns, realized_vol=sigma, vol_baseline=baseline,
        )
    stats.stocks_retained = len(series)
    if not series:
        raise EmptyAfterFilters("no stocks survive the minimum-activity filter")

    aggregate = _aggregate_series(series, by_stock, config, baseline_mode)
    return series, aggregate, stats


def _aggregate_series(series, by_stock, config, baseline_mode) -> FlowSeries:
    # single reduction over per-day partial sums across retained stocks
    ret_num: Dict[str, float] = {}
    ret_den: Dict[str, float] = {}
    flow_sum: Dict[str, Dict[InvestorType, float]] = {}
    flow_cnt: Dict[str, int] = {}
    for stock_id in series:
        for obs in by_stock[stock_id]:
            d = obs.date
            ret_num[d] = ret_num.get(d, 0.0) + obs.market_cap * obs.close_return
            ret_den[d] = ret_den.get(d, 0.0) + obs.market_cap
            if d not in flow_sum:
                flow_sum[d] = {inv: 0.0 for inv in InvestorType.all()}
                flow_cnt[d] = 0
            for inv in InvestorType.all():
                flow_sum[d][inv] += normalize_flow(obs, inv)
            flow_cnt[d] += 1

    dates = tuple(sorted(ret_num))
    returns = np.array([ret_num[d] / ret_den[d] for d in dates])
    s_mc = {
        inv: np.array([flow_sum[d][inv] / flow_cnt[d] for d in dates])
        for inv in InvestorType.all()
    }
    sigma = realized_vol(returns, config.ewma_decay)
    baseline = vol_baseline(sigma, mode=baseline_mode)
    return FlowSeries(
        stock_id=MARKET_ID, dates=dates, s_mc=s_mc,
        returns=returns, realized_vol=sigma, vol_baseline=baseline,
    )
