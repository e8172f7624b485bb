"""Regime-aware order-flow signal extraction and backtesting."""

__version__ = "0.1.0"

from .data_model import (  # noqa: F401
    FlowSeries,
    InvestorType,
    PanelObservation,
    RunConfig,
    validate_panel,
)
