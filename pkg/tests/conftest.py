import numpy as np
import pytest

from regimeflow.data_model import InvestorType, PanelObservation


def make_obs(date="2020-01-02", stock_id="A", buy=1e9, sell=5e8,
             mcap=1e12, ret=0.01):
    flat = {inv: buy for inv in InvestorType.all()}
    flat_s = {inv: sell for inv in InvestorType.all()}
    return PanelObservation(date=date, stock_id=stock_id, buy_value=flat,
                            sell_value=flat_s, market_cap=mcap, close_return=ret)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo one line per acceptance criterion after the run."""
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
