"""Synthetic panel generator with planted ground truth.

The generator inverts the estimators: a market-level three-state Markov
chain drives regime-dependent returns, a persistent latent signal per
stock drives next-day stock returns through regime-conditional
coefficients, and investor flows respond asymmetrically to lagged market
shocks. The hidden truth record keeps every planted path and coefficient
so estimator recovery can be scored exactly.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .data_model import InvestorType, PanelObservation
from .ingest import realized_vol, vol_baseline

# Transition matrix whose stationary distribution is ~(0.43, 0.49, 0.08),
# matching the bull/normal/crisis day shares of the target calibration.
DEFAULT_TRANSITION = np.array([
    [0.970, 0.029, 0.001],
    [0.025, 0.965, 0.010],
    [0.010, 0.060, 0.930],
])

DEFAULT_MU = np.array([0.00154, -0.00034, -0.00223])
DEFAULT_SIGMA = np.array([0.0054, 0.0124, 0.0387])
DEFAULT_BETA = np.array([0.00023, 0.00064, 0.00204])

# per investor type: (beta_plus, beta_minus) response to lagged shocks
DEFAULT_ASYMMETRY = {
    InvestorType.FOREIGN: (-0.000035, 0.000070),
    InvestorType.INSTITUTIONAL: (-0.000021, -0.000045),
    InvestorType.INDIVIDUAL: (0.000089, 0.000014),
}

REGIME_NAMES = ("Bull", "Normal", "Crisis")


@dataclass
class SynthSpec:
    mu: np.ndarray = field(default_factory=lambda: DEFAULT_MU.copy())
    sigma: np.ndarray = field(default_factory=lambda: DEFAULT_SIGMA.copy())
    transition: np.ndarray = field(default_factory=lambda: DEFAULT_TRANSITION.copy())
    beta: np.ndarray = field(default_factory=lambda: DEFAULT_BETA.copy())
    asymmetry: Dict[InvestorType, tuple] = field(
        default_factory=lambda: dict(DEFAULT_ASYMMETRY))
    phi: float = 0.95
    q: float = 0.0975          # latent-signal stationary variance ~1 at phi=0.95
    r0: float = 0.25           # measurement noise on observed flows
    gamma: float = 1.0
    ewma_decay: float = 0.94
    shock_multiple: float = 2.0
    idio_vol: float = 0.01     # stock-level return noise on top of the market
    regime_idio_scaling: bool = True  # idio vol scaled by sigma_s / sigma_1
    n_stocks: int = 50
    n_days: int = 500
    size_gradient: float = 0.0  # >0: smaller stocks carry a stronger signal
    cap_range: tuple = (1e10, 1e13)
    gross_turnover: float = 0.005  # base gross trading as fraction of mcap
    start_date: str = "2020-01-01"
    seed: int = 0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if np.any(np.abs(self.transition.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if np.any(self.sigma <= 0):
            raise ValueError("regime sigmas must be positive")


@dataclass
class SynthTruth:
    spec: SynthSpec
    states: np.ndarray                    # market regime path s_t
    market_returns: np.ndarray
    theta: Dict[InvestorType, np.ndarray]  # (n_stocks, T) latent signals
    signal_scale: np.ndarray              # per-stock multiplier c_i
    dates: list
    stock_ids: list


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eig(np.asarray(P, float).T)
    i = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.abs(np.real(vecs[:, i]))
    return pi / pi.sum()


def generate_regime_path(spec: SynthSpec, T: int,
                         rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Sample s_1..s_T from the chain, initial state from the stationary law."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    P = spec.transition
    pi = stationary_distribution(P)
    states = np.empty(T, dtype=np.int64)
    cum0 = np.cumsum(pi)
    cumP = np.cumsum(P, axis=1)
    u = rng.random(T)
    states[0] = np.searchsorted(cum0, u[0])
    for t in range(1, T):
        states[t] = np.searchsorted(cumP[states[t - 1]], u[t])
    return states


def generate_market_returns(spec: SynthSpec, T: int,
                            rng: Optional[np.random.Generator] = None):
    """Regime path plus returns r_t = mu_{s_t} + sigma_{s_t} z_t."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    states = generate_regime_path(spec, T, rng)
    z = rng.standard_normal(T)
    returns = spec.mu[states] + spec.sigma[states] * z
    return returns, states


def _dates(start: str, n: int) -> list:
    d0 = _dt.date.fromisoformat(start)
    return [(d0 + _dt.timedelta(days=i)).isoformat() for i in range(n)]


def generate_arrays(spec: SynthSpec):
    """Array-level synthetic panel plus hidden truth record.

    Market: r^m_t from the regime chain. Stock i:
      theta_{i,t} = phi * theta_{i,t-1} + N(0, q), per investor type;
      S_{i,t} = c_i * theta_{i,t} + meas noise (variance r0*(sig_t/bar)^gamma)
                + asymmetric response to the lagged market shock;
      r_{i,t+1} = r^m_{t+1} + beta_{s_t} * c_i * theta^{for}_{i,t}
                  + idio_vol * u.
    Deterministic per-stock RNG streams derived from (seed, stock index)
    keep output independent of evaluation order.
    """
    T, n = spec.n_days, spec.n_stocks
    root = np.random.default_rng(spec.seed)
    market_returns, states = generate_market_returns(spec, T, root)
    market_returns = np.clip(market_returns, -0.5, None)

    # causal vol of the market path, matching the ingest estimator
    sig = realized_vol(market_returns, spec.ewma_decay)
    sig_bar = vol_baseline(sig)
    meas_sd = np.sqrt(np.where(sig > 0, spec.r0 * (sig / sig_bar) ** spec.gamma,
                               spec.r0 * 1e-6))

    # lagged market shock indicators (information at t about day t-1)
    k = spec.shock_multiple
    pos = np.zeros(T)
    neg = np.zeros(T)
    mag = np.zeros(T)
    pos[1:] = (market_returns[:-1] > k * sig[:-1]).astype(float)
    neg[1:] = (market_returns[:-1] < -k * sig[:-1]).astype(float)
    mag[1:] = np.abs(market_returns[:-1])

    # per-stock initial caps, size rank and signal multiplier
    cap_rng = np.random.default_rng([spec.seed, 10**6])
    caps0 = np.exp(cap_rng.uniform(np.log(spec.cap_range[0]),
                                   np.log(spec.cap_range[1]), size=n))
    order = np.argsort(np.argsort(caps0))
    pct = order / max(n - 1, 1)
    scale = 1.0 + spec.size_gradient * (0.5 - pct)

    sd_theta = np.sqrt(spec.q)
    investors = InvestorType.all()
    # per-stock derived RNG streams; draw order per stock is fixed so that
    # parallel or vectorized evaluation cannot change the output
    eta = {inv: np.empty((n, T)) for inv in investors}
    meas = {inv: np.empty((n, T)) for inv in investors}
    u = np.empty((n, T))
    for i in range(n):
        rng = np.random.default_rng([spec.seed, i])
        for inv in investors:
            eta[inv][i] = rng.standard_normal(T) * sd_theta
            meas[inv][i] = rng.standard_normal(T)
        u[i] = rng.standard_normal(T)

    theta = {}
    flows = {}
    for inv in investors:
        th = np.empty((n, T))
        th[:, 0] = eta[inv][:, 0] / np.sqrt(1.0 - spec.phi ** 2)  # stationary draw
        for t in range(1, T):
            th[:, t] = spec.phi * th[:, t - 1] + eta[inv][:, t]
        theta[inv] = th
        bp, bn = spec.asymmetry[inv]
        resp = bp * pos * mag + bn * neg * mag
        flows[inv] = scale[:, None] * th + meas_sd[None, :] * meas[inv] + resp[None, :]

    if spec.regime_idio_scaling:
        idio = spec.idio_vol * (spec.sigma[states] / spec.sigma[1])
    else:
        idio = np.full(T, spec.idio_vol)
    stock_returns = np.tile(market_returns, (n, 1))
    stock_returns[:, 1:] += (spec.beta[states[:-1]][None, :]
                             * scale[:, None] * theta[InvestorType.FOREIGN][:, :-1]
                             + idio[None, 1:] * u[:, 1:])
    stock_returns = np.clip(stock_returns, -0.95, None)

    dates = _dates(spec.start_date, T)
    stock_ids = [f"S{i:04d}" for i in range(n)]
    truth = SynthTruth(spec=spec, states=states, market_returns=market_returns,
                       theta=theta, signal_scale=scale, dates=dates,
                       stock_ids=stock_ids)
    arrays = {
        "flows": flows,
        "stock_returns": stock_returns,
        "caps0": caps0,
        "market_sigma": sig,
        "market_sigma_bar": sig_bar,
        "shock_pos": pos,
        "shock_neg": neg,
        "shock_mag": mag,
    }
    return arrays, truth


def generate_panel(spec: SynthSpec):
    """Materialize PanelObservation rows from the array-level generator.

    Buy/sell values are reverse-engineered so that normalized flow
    reproduces the planted flow exactly: net = S * mcap, gross = base
    turnover + |net|.
    """
    arrays, truth = generate_arrays(spec)
    flows = arrays["flows"]
    stock_returns = arrays["stock_returns"]
    caps0 = arrays["caps0"]
    investors = InvestorType.all()
    T, n = truth.spec.n_days, truth.spec.n_stocks
    rows = []
    g0 = spec.gross_turnover
    for i in range(n):
        mcap_prior = caps0[i]
        for t in range(T):
            buy = {}
            sell = {}
            for inv in investors:
                net = flows[inv][i][t] * mcap_prior
                gross = g0 * mcap_prior + abs(net)
                buy[inv] = (gross + net) / 2.0
                sell[inv] = (gross - net) / 2.0
            rows.append(PanelObservation(
                date=truth.dates[t], stock_id=truth.stock_ids[i],
                buy_value=buy, sell_value=sell,
                market_cap=mcap_prior, close_return=float(stock_returns[i][t]),
            ))
            mcap_prior = max(mcap_prior * (1.0 + stock_returns[i][t]), 1.0)
    return rows, truth
