import numpy as np
import pytest

from regimeflow.backtest import (
    StrategySpec, StrategyVariant, build_positions, compute_metrics,
    decile_weights, quintile_membership, run_backtest, run_robustness,
    strategy_returns,
)


def spec(variant=StrategyVariant.KALMAN_FILTERED, **kw):
    return StrategySpec(variant=variant, **kw)


class TestDecileWeights:
    def test_long_top_short_bottom(self):
        sig = np.arange(10.0)
        w = decile_weights(sig, 0.10)
        assert w[-1] == pytest.approx(1.0)
        assert w[0] == pytest.approx(-1.0)
        assert np.count_nonzero(w) == 2

    def test_gross_per_side(self):
        sig = np.arange(20.0)
        w = decile_weights(sig, 0.25)
        assert w[w > 0].sum() == pytest.approx(1.0)
        assert w[w < 0].sum() == pytest.approx(-1.0)
        assert w.sum() == pytest.approx(0.0, abs=1e-12)

    def test_all_equal_degenerate(self):
        assert np.array_equal(decile_weights(np.full(10, 2.0), 0.1), np.zeros(10))

    def test_nan_gets_zero_weight(self):
        sig = np.array([np.nan, 1.0, 2.0, 3.0, np.nan])
        w = decile_weights(sig, 0.34)
        assert w[0] == 0.0 and w[4] == 0.0
        assert w[3] > 0 and w[1] < 0


class TestBuildPositions:
    def test_all_weather_full_crisis_zeroes(self, rng):
        sig = rng.normal(size=(5, 10))
        s = spec(StrategyVariant.ALL_WEATHER, regime_cap=0.6)
        w = build_positions(sig, s, p_crisis=np.ones(5), neg_shock=np.zeros(5))
        assert np.array_equal(w, np.zeros_like(w))

    def test_all_weather_linear_scaling(self, rng):
        sig = rng.normal(size=(4, 10))
        base = build_positions(sig, spec())
        pc = np.array([0.0, 0.3, 0.45, 0.6])
        aw = build_positions(sig, spec(StrategyVariant.ALL_WEATHER),
                             p_crisis=pc, neg_shock=np.zeros(4))
        g = np.maximum(0.0, 1.0 - pc / 0.6)
        assert np.allclose(aw, base * g[:, None])

    def test_stop_loss_momentum_only(self, rng):
        sig = rng.normal(size=(3, 10))
        neg = np.array([0.0, 1.0, 0.0])
        mom = build_positions(sig, spec(StrategyVariant.ALL_WEATHER,
                                        momentum_profile=True),
                              p_crisis=np.zeros(3), neg_shock=neg)
        non = build_positions(sig, spec(StrategyVariant.ALL_WEATHER,
                                        momentum_profile=False),
                              p_crisis=np.zeros(3), neg_shock=neg)
        assert np.array_equal(mom[1], np.zeros(10))
        assert not np.array_equal(non[1], np.zeros(10))

    def test_sign_flip_fades(self, rng):
        sig = rng.normal(size=(3, 10))
        a = build_positions(sig, spec())
        b = build_positions(sig, spec(sign=-1.0))
        assert np.allclose(b, -a)


class TestMetrics:
    def test_hand_fixture(self):
        # daily returns 1%, -2%, 3%, -1%
        r = np.array([0.01, -0.02, 0.03, -0.01])
        m = compute_metrics(r, annualization=252)
        eq = np.cumprod(1 + r)
        assert np.allclose(m.equity, eq)
        assert m.total_return == pytest.approx(eq[-1] - 1.0)
        # peak after day 1 is 1.01; trough 1.01*0.98 -> drawdown 2%
        assert m.max_drawdown == pytest.approx(0.02, abs=1e-12)
        assert m.sharpe == pytest.approx(r.mean() / r.std(ddof=1) * np.sqrt(252))
        years = 4 / 252
        ann = (1 + m.total_return) ** (1 / years) - 1
        assert m.calmar == pytest.approx(ann / 0.02)

    def test_monotone_equity_zero_drawdown(self):
        m = compute_metrics(np.array([0.01, 0.02, 0.005]))
        assert m.max_drawdown == 0.0
        assert m.calmar_infinite

    def test_initial_loss_counts_from_par(self):
        # drawdown measured from the starting equity of 1.0
        m = compute_metrics(np.array([-0.05, 0.01]))
        assert m.max_drawdown == pytest.approx(0.05)

    def test_zero_variance_flag(self):
        m = compute_metrics(np.zeros(10))
        assert m.zero_variance
        assert np.isnan(m.sharpe)

    def test_flat_day_prepend_keeps_drawdown(self):
        r = np.array([0.01, -0.02, 0.03, -0.01])
        a = compute_metrics(r)
        b = compute_metrics(np.concatenate([[0.0], r]))
        assert b.max_drawdown == pytest.approx(a.max_drawdown)


class TestStrategyReturns:
    def test_hold_one_day(self):
        w = np.array([[1.0, -1.0], [0.0, 0.0], [0.5, -0.5], [2.0, 2.0]])
        r = np.array([[0.0, 0.0], [0.02, -0.01], [0.01, 0.01], [0.04, -0.02]])
        out = strategy_returns(w, r)
        assert len(out) == 3  # the final day's weights are never applied
        assert out[0] == pytest.approx(1.0 * 0.02 + (-1.0) * (-0.01))
        assert out[1] == pytest.approx(0.0)
        assert out[2] == pytest.approx(0.5 * 0.04 + (-0.5) * (-0.02))

    def test_no_lookahead_truncation(self, rng):
        # metrics over the first half do not change when the future changes
        T, n = 120, 15
        sig = rng.normal(size=(T, n))
        r = rng.normal(0, 0.01, (T, n))
        s = spec()
        full = strategy_returns(build_positions(sig, s), r)
        r2 = r.copy()
        sig2 = sig.copy()
        r2[60:] = rng.normal(0, 0.05, (60, n))
        sig2[60:] = rng.normal(size=(60, n))
        trunc = strategy_returns(build_positions(sig2, s), r2)
        assert np.array_equal(full[:59], trunc[:59])


class TestRunBacktest:
    def test_equity_recompute(self, rng):
        sig = rng.normal(size=(80, 12))
        r = rng.normal(0, 0.01, (80, 12))
        rep = run_backtest(sig, r, spec())
        assert np.allclose(rep.equity, np.cumprod(1 + rep.daily_returns),
                           atol=1e-12)

    def test_turnover_positive(self, rng):
        sig = rng.normal(size=(50, 12))
        r = rng.normal(0, 0.01, (50, 12))
        rep = run_backtest(sig, r, spec())
        assert rep.turnover > 0


class TestQuintiles:
    def test_partition_sizes(self, rng):
        n = 1000
        caps = np.tile(rng.uniform(1e9, 1e12, n), (30, 1))
        dates = [f"2020-01-{d:02d}" for d in range(1, 31)]
        bucket = quintile_membership(dates, caps)
        counts = np.bincount(bucket[0], minlength=5)
        assert np.all(np.abs(counts - 200) <= 1)

    def test_rebalances_monthly_from_prior_month(self):
        n = 10
        dates = ([f"2020-01-{d:02d}" for d in range(1, 11)]
                 + [f"2020-02-{d:02d}" for d in range(1, 11)]
                 + [f"2020-03-{d:02d}" for d in range(1, 11)])
        asc = np.arange(1, n + 1) * 1e9
        caps = np.empty((30, n))
        caps[:10] = asc          # January: ascending caps
        caps[10:] = asc[::-1]    # February onward: ordering inverted
        bucket = quintile_membership(dates, caps)
        assert np.array_equal(bucket[0], bucket[9])   # stable within month
        jan, feb, mar = bucket[0], bucket[10], bucket[20]
        # February still uses January's ordering; March picks up the flip
        assert np.array_equal(feb, jan)
        assert np.array_equal(mar, jan[::-1])

    def test_robustness_report_shapes(self, rng):
        T, n = 300, 25
        sig = rng.normal(size=(T, n))
        r = rng.normal(0, 0.01, (T, n))
        caps = np.tile(rng.uniform(1e9, 1e12, n), (T, 1))
        dates = [f"20{20 + t // 250}-{(t % 250) // 21 + 1:02d}-{t % 21 + 1:02d}"
                 for t in range(T)]
        rob = run_robustness(sig, r, spec(), dates, caps)
        assert set(rob.by_year) == {d[:4] for d in dates[1:]}
        assert len(rob.by_quintile) == 5
        for q in rob.by_quintile.values():
            assert q["n_stocks"] == 5
