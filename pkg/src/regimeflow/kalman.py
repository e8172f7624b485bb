"""Adaptive scalar Kalman filter with volatility-coupled measurement noise.

State:        theta_t = phi * theta_{t-1} + eta_t,  eta ~ N(0, Q)
Measurement:  S_t = theta_t + eps_t,                eps ~ N(0, R_t)
Noise law:    R_t = R0 * (sigma_t / sigma_bar)^gamma

High realized volatility inflates R_t, shrinking the gain so the filter
discounts panic-trading observations as noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import LengthMismatch, NonConvergence, NonFiniteInput, NonPositiveBaseline

VOL_FLOOR = 1e-6  # R_t floor factor at sigma_t = 0 to keep the gain below 1


@dataclass(frozen=True)
class KalmanParams:
    phi: float
    q: float
    r0: float
    gamma: float = 1.0

    def __post_init__(self):
        if not (0 < self.phi < 1):
            raise ValueError(f"phi must lie in (0,1), got {self.phi}")
        if self.q <= 0 or self.r0 <= 0:
            raise ValueError("q and r0 must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    @property
    def stationary_variance(self):
        return self.q / (1.0 - self.phi ** 2)


@dataclass
class FilterState:
    mean: float = 0.0
    variance: float = 0.0
    gain: float = 0.0
    r_t: float = 0.0


@dataclass
class FilterOutput:
    filtered: np.ndarray
    gain: np.ndarray
    r_t: np.ndarray
    predicted_variance: np.ndarray
    posterior_variance: np.ndarray
    loglik: float


def measurement_variance(params: KalmanParams, sigma_t: float, sigma_bar: float) -> float:
    """R_t = R0 * (sigma_t / sigma_bar)^gamma, floored at degenerate vol."""
    if sigma_bar <= 0:
        raise NonPositiveBaseline(f"sigma_bar must be > 0, got {sigma_bar}")
    if sigma_t < 0:
        raise NonFiniteInput(f"sigma_t must be >= 0, got {sigma_t}")
    if params.gamma == 0.0:
        return params.r0
    if sigma_t == 0.0:
        return params.r0 * VOL_FLOOR
    return params.r0 * (sigma_t / sigma_bar) ** params.gamma


def step(state: FilterState, params: KalmanParams, observation: float, r_t: float) -> FilterState:
    """One predict/update cycle; returns the new posterior state."""
    if not np.isfinite(observation) or not np.isfinite(r_t):
        raise NonFiniteInput(f"observation={observation}, r_t={r_t}")
    m_pred = params.phi * state.mean
    p_pred = params.phi ** 2 * state.variance + params.q
    gain = p_pred / (p_pred + r_t) if (p_pred + r_t) > 0 else 1.0
    mean = m_pred + gain * (observation - m_pred)
    variance = (1.0 - gain) * p_pred
    return FilterState(mean=mean, variance=variance, gain=gain, r_t=r_t)


def filter_series(
    obs: np.ndarray,
    sigma: np.ndarray,
    sigma_bar: np.ndarray,
    params: KalmanParams,
) -> FilterOutput:
    """Run the adaptive filter over one series; strictly causal.

    Initialization: theta_0 = 0, P_0 at the stationary variance
    Q / (1 - phi^2). Also accumulates the Gaussian prediction-error
    log-likelihood.
    """
    obs = np.asarray(obs, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sigma_bar = np.asarray(sigma_bar, dtype=float)
    if not (len(obs) == len(sigma) == len(sigma_bar)):
        raise LengthMismatch(
            f"lengths differ: obs={len(obs)} sigma={len(sigma)} sigma_bar={len(sigma_bar)}"
        )
    n = len(obs)
    out = FilterOutput(
        filtered=np.empty(n), gain=np.empty(n), r_t=np.empty(n),
        predicted_variance=np.empty(n), posterior_variance=np.empty(n), loglik=0.0,
    )
    state = FilterState(mean=0.0, variance=params.stationary_variance)
    loglik = 0.0
    for t in range(n):
        r_t = measurement_variance(params, sigma[t], sigma_bar[t])
        m_pred = params.phi * state.mean
        p_pred = params.phi ** 2 * state.variance + params.q
        innov_var = p_pred + r_t
        innov = obs[t] - m_pred
        loglik += -0.5 * (np.log(2 * np.pi * innov_var) + innov ** 2 / innov_var)
        state = step(state, params, obs[t], r_t)
        out.filtered[t] = state.mean
        out.gain[t] = state.gain
        out.r_t[t] = r_t
        out.predicted_variance[t] = p_pred
        out.posterior_variance[t] = state.variance
    out.loglik = float(loglik)
    return out


def filter_panel(
    obs: np.ndarray,
    sigma: np.ndarray,
    sigma_bar: np.ndarray,
    params: KalmanParams,
) -> np.ndarray:
    """Filter many series at once: inputs shaped (n_series, T).

    Same recursion as filter_series, vectorized across rows. Returns the
    filtered means with the same shape.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    sigma_bar = np.atleast_2d(np.asarray(sigma_bar, dtype=float))
    if obs.shape != sigma.shape or obs.shape != sigma_bar.shape:
        raise LengthMismatch("panel shapes differ")
    n, T = obs.shape
    if np.any(sigma_bar <= 0):
        raise NonPositiveBaseline("sigma_bar must be > 0 everywhere")
    ratio = np.where(sigma > 0, sigma / sigma_bar, 0.0)
    if params.gamma == 0.0:
        r = np.full_like(obs, params.r0)
    else:
        r = np.where(sigma > 0, params.r0 * ratio ** params.gamma, params.r0 * VOL_FLOOR)
    filtered = np.empty_like(obs)
    mean = np.zeros(n)
    var = np.full(n, params.stationary_variance)
    for t in range(T):
        m_pred = params.phi * mean
        p_pred = params.phi ** 2 * var + params.q
        gain = p_pred / (p_pred + r[:, t])
        mean = m_pred + gain * (obs[:, t] - m_pred)
        var = (1.0 - gain) * p_pred
        filtered[:, t] = mean
    return filtered


def steady_state_gain(params: KalmanParams, r: float) -> float:
    """Fixed point of the scalar Riccati recursion at constant R."""
    # P_pred solves P = phi^2 * (1-K) * P + Q with K = P/(P+R)
    # => phi^2 * P * R / (P + R) + Q = P  (quadratic in P)
    a = 1.0
    b = r * (1.0 - params.phi ** 2) - params.q
    c = -params.q * r
    p_pred = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return p_pred / (p_pred + r)


def estimate_params(
    obs: np.ndarray,
    sigma: np.ndarray,
    sigma_bar: np.ndarray,
    gamma: float = 1.0,
    max_iter: int = 500,
) -> tuple:
    """Maximum-likelihood (phi, Q, R0) with gamma fixed.

    Maximizes the Gaussian prediction-error log-likelihood via bounded
    L-BFGS-B over (logit phi, log Q, log R0), seeded from the sample
    variance split 90% measurement / 10% state. Deterministic.

    Returns (KalmanParams, loglik, converged). Raises NonConvergence with
    the best-so-far fit attached if the optimizer hits the iteration cap.
    """
    obs = np.asarray(obs, dtype=float)
    if len(obs) < 100:
        raise ValueError(f"need at least 100 observations, got {len(obs)}")
    var = float(np.var(obs))
    if var <= 0:
        var = 1e-12
    x0 = np.array([np.log(0.95 / 0.05), np.log(0.1 * var), np.log(0.9 * var)])

    def unpack(x):
        phi = 1.0 / (1.0 + np.exp(-x[0]))
        phi = min(max(phi, 1e-6), 1 - 1e-6)
        return KalmanParams(phi=phi, q=np.exp(x[1]), r0=np.exp(x[2]), gamma=gamma)

    def neg_loglik(x):
        try:
            p = unpack(x)
            return -filter_series(obs, sigma, sigma_bar, p).loglik
        except (FloatingPointError, OverflowError):
            return 1e12

    res = minimize(
        neg_loglik, x0, method="L-BFGS-B",
        bounds=[(-12, 12), (np.log(var) - 40, np.log(var) + 10),
                (np.log(var) - 40, np.log(var) + 10)],
        options={"maxiter": max_iter},
    )
    params = unpack(res.x)
    loglik = -float(res.fun)
    if not res.success and res.status != 1:  # status 1 = maxiter
        # fall through: best-so-far is still usable for grid refinement
        pass
    converged = bool(res.success)
    if res.status == 1:
        raise NonConvergence("MLE hit iteration cap", best=(params, loglik))
    return params, loglik, converged
