"""Core domain types: panel rows, per-stock flow series, run configuration.

All containers are frozen after construction and safe to share across workers.
Dates are opaque ordered keys (ISO strings) -- no trading-calendar logic.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Sequence

import numpy as np

from .errors import DuplicateKey, NonPositiveMarketCap, UnparseableDate, ValidationError

_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


class InvestorType(str, Enum):
    FOREIGN = "foreign"
    INSTITUTIONAL = "institutional"
    INDIVIDUAL = "individual"

    @classmethod
    def all(cls):
        return (cls.FOREIGN, cls.INSTITUTIONAL, cls.INDIVIDUAL)


@dataclass(frozen=True)
class PanelObservation:
    """One stock-day record with buy/sell value per investor class."""

    date: str
    stock_id: str
    buy_value: Dict[InvestorType, float]
    sell_value: Dict[InvestorType, float]
    market_cap: float  # prior-day market capitalization
    close_return: float

    def __post_init__(self):
        if not _ISO_DATE.match(self.date):
            raise UnparseableDate(self.date)
        if not (self.market_cap > 0):
            raise NonPositiveMarketCap(self.stock_id, self.date, self.market_cap)
        for inv in InvestorType.all():
            if inv not in self.buy_value or inv not in self.sell_value:
                raise ValidationError(
                    f"missing investor type {inv.value} at ({self.stock_id}, {self.date})"
                )
            if self.buy_value[inv] < 0 or self.sell_value[inv] < 0:
                raise ValidationError(
                    f"negative buy/sell value for {inv.value} at ({self.stock_id}, {self.date})"
                )
        if not (self.close_return > -1):
            raise ValidationError(
                f"close_return must exceed -1, got {self.close_return} at "
                f"({self.stock_id}, {self.date})"
            )


@dataclass(frozen=True)
class FlowSeries:
    """Per-stock aligned arrays: normalized flows, returns, volatility, baseline."""

    stock_id: str
    dates: tuple
    s_mc: Dict[InvestorType, np.ndarray]
    returns: np.ndarray
    realized_vol: np.ndarray
    vol_baseline: np.ndarray  # per-t expanding mean of realized_vol

    def __post_init__(self):
        n = len(self.dates)
        arrays = [self.returns, self.realized_vol, self.vol_baseline]
        arrays += [self.s_mc[inv] for inv in InvestorType.all()]
        for a in arrays:
            if len(a) != n:
                raise ValidationError(f"array length mismatch in FlowSeries({self.stock_id})")
        if any(self.dates[i] >= self.dates[i + 1] for i in range(n - 1)):
            raise ValidationError(f"dates not strictly increasing in FlowSeries({self.stock_id})")
        if np.any(self.realized_vol < 0):
            raise ValidationError(f"negative realized_vol in FlowSeries({self.stock_id})")

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True)
class RunConfig:
    """Pipeline-wide parameters; invariants enforced at construction."""

    # Kalman
    phi: float = 0.95
    q: float = 1e-8
    r0: float = 1e-6
    gamma: float = 1.0
    ewma_decay: float = 0.94
    # Regime
    n_regimes: int = 3
    crisis_threshold: float = 0.30
    em_max_iter: int = 500
    em_tol: float = 1e-6
    # Asymmetry
    shock_multiple: float = 2.0
    # Backtest
    signal_quantile: float = 0.10
    regime_cap: float = 0.6
    annualization: int = 252
    stop_loss: bool = True
    # Ingest
    winsor_lower: float = 0.01
    winsor_upper: float = 0.99
    min_observations: int = 60
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.phi < 1):
            raise ValidationError(f"phi must lie in (0,1), got {self.phi}")
        if self.q <= 0:
            raise ValidationError(f"q must be > 0, got {self.q}")
        if self.r0 <= 0:
            raise ValidationError(f"r0 must be > 0, got {self.r0}")
        if self.gamma < 0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")
        if not (0 < self.ewma_decay < 1):
            raise ValidationError(f"ewma_decay must lie in (0,1), got {self.ewma_decay}")
        if not (0 < self.crisis_threshold < 1):
            raise ValidationError(
                f"crisis_threshold must lie in (0,1), got {self.crisis_threshold}"
            )
        if self.shock_multiple <= 0:
            raise ValidationError(f"shock_multiple must be > 0, got {self.shock_multiple}")
        if not (0 <= self.winsor_lower < self.winsor_upper <= 1):
            raise ValidationError(
                f"winsor quantiles must satisfy 0 <= lo < hi <= 1, "
                f"got ({self.winsor_lower}, {self.winsor_upper})"
            )

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


def validate_panel(rows: Sequence[PanelObservation]) -> list:
    """Sort rows by (stock_id, date) and reject duplicate keys.

    Idempotent: validating an already-validated panel returns an equal list.
    """
    if not rows:
        raise ValidationError("panel is empty")
    ordered = sorted(rows, key=lambda r: (r.stock_id, r.date))
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.stock_id == cur.stock_id and prev.date == cur.date:
            raise DuplicateKey(cur.stock_id, cur.date)
    return ordered
