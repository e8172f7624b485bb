"""Regression and inference engine: pooled OLS, predictive-improvement
table, asymmetric shock-response fits with Wald tests, and circular block
bootstrap confidence intervals.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
from scipy import stats

from .errors import NoShocks, RankDeficient, ZeroVariance


@dataclass
class OlsFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    r2: float
    n_obs: int
    resid_variance: float
    cov: np.ndarray
    residuals: np.ndarray


def pooled_ols(y: np.ndarray, x: np.ndarray, add_intercept: bool = True,
               robust: bool = False) -> OlsFit:
    """Least squares via QR; conventional t-stats by default, HC0 optional."""
    y = np.asarray(y, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != len(y):
        x = x.T
    if add_intercept:
        x = np.column_stack([np.ones(len(y)), x])
    n, k = x.shape
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in regression inputs")
    if n <= k:
        raise RankDeficient(f"N={n} <= k={k}")
    q, r = np.linalg.qr(x)
    diag = np.abs(np.diag(r))
    if np.any(diag < 1e-12 * diag.max()):
        raise RankDeficient("design matrix is rank deficient")
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - x @ beta
    dof = n - k
    s2 = float(resid @ resid) / dof
    xtx_inv = np.linalg.solve(r.T @ r, np.eye(k))
    if robust:
        meat = x.T @ (x * (resid ** 2)[:, None])
        cov = xtx_inv @ meat @ xtx_inv
    else:
        cov = s2 * xtx_inv
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.nan)
    tss = float(((y - y.mean()) ** 2).sum()) if add_intercept else float((y ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 0.0
    return OlsFit(coefficients=beta, std_errors=se, t_stats=t, r2=max(min(r2, 1.0), 0.0),
                  n_obs=n, resid_variance=s2, cov=cov, residuals=resid)


def compound_return(returns: np.ndarray, horizon: int) -> np.ndarray:
    """r_{t+1..t+h} compounded; length T - horizon, aligned to signal at t."""
    returns = np.asarray(returns, dtype=float)
    T = len(returns)
    if horizon >= T:
        return np.empty(0)
    growth = np.cumprod(1.0 + returns)
    # forward product over (t+1 .. t+h): growth[t+h] / growth[t]
    out = growth[horizon:] / growth[:-horizon] - 1.0
    return out[: T - horizon]


@dataclass
class PredictiveRow:
    investor: str
    horizon: int
    t_raw: float
    t_filtered: float
    r2_raw: float
    r2_filtered: float
    improvement: float


def predictive_table(
    raw: Dict[str, np.ndarray],
    filtered: Dict[str, np.ndarray],
    next_return_by_h: Dict[int, Dict[str, np.ndarray]],
    horizons=(1, 5, 20),
) -> list:
    """Per investor x horizon: raw vs filtered t-stats and R^2.

    raw/filtered map investor name -> pooled signal array; next_return_by_h
    maps horizon -> investor -> compounded forward return aligned to each
    signal entry. improvement = (t_filt - t_raw) / |t_raw|.
    """
    rows = []
    for inv in raw:
        for h in horizons:
            y = next_return_by_h[h][inv]
            m = len(y)
            fr = pooled_ols(y, raw[inv][:m][:, None])
            ff = pooled_ols(y, filtered[inv][:m][:, None])
            t_raw, t_filt = fr.t_stats[1], ff.t_stats[1]
            imp = (abs(t_filt) - abs(t_raw)) / abs(t_raw) if t_raw != 0 else np.nan
            rows.append(PredictiveRow(
                investor=inv, horizon=h, t_raw=t_raw, t_filtered=t_filt,
                r2_raw=fr.r2, r2_filtered=ff.r2, improvement=imp))
    return rows


def shock_indicators(returns: np.ndarray, sigma: np.ndarray, k: float):
    """Time-t indicators of a lagged shock: 1[r_{t-1} > k*sigma_{t-1}] and
    1[r_{t-1} < -k*sigma_{t-1}], with |r_{t-1}| attached.

    sigma must be the causal volatility series; entries at t=0 are zero.
    """
    returns = np.asarray(returns, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    T = len(returns)
    pos = np.zeros(T)
    neg = np.zeros(T)
    mag = np.zeros(T)
    lag_r = returns[:-1]
    lag_s = sigma[:-1]
    pos[1:] = (lag_r > k * lag_s).astype(float)
    neg[1:] = (lag_r < -k * lag_s).astype(float)
    mag[1:] = np.abs(lag_r)
    return pos, neg, mag


@dataclass
class AsymmetryFit:
    investor: str
    beta_pos: float
    beta_neg: float
    t_pos: float
    t_neg: float
    ratio: float
    wald_stat: float
    p_value: float
    n_pos_shocks: int
    n_neg_shocks: int
    partial: bool = False


def asymmetry_fit(
    delta_flow: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    mag: np.ndarray,
    investor: str = "",
) -> AsymmetryFit:
    """OLS of flow changes on signed lagged-shock magnitudes; Wald test of
    beta+ = beta- from the coefficient covariance.
    """
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 and n_neg == 0:
        raise NoShocks("neither shock indicator ever fires")
    partial = n_pos == 0 or n_neg == 0
    x = np.column_stack([pos * mag, neg * mag])
    if partial:
        live = 0 if n_pos > 0 else 1
        fit = pooled_ols(delta_flow, x[:, [live]])
        bp = fit.coefficients[1] if live == 0 else np.nan
        bn = fit.coefficients[1] if live == 1 else np.nan
        tp = fit.t_stats[1] if live == 0 else np.nan
        tn = fit.t_stats[1] if live == 1 else np.nan
        return AsymmetryFit(investor=investor, beta_pos=bp, beta_neg=bn, t_pos=tp,
                            t_neg=tn, ratio=np.nan, wald_stat=np.nan, p_value=np.nan,
                            n_pos_shocks=n_pos, n_neg_shocks=n_neg, partial=True)
    fit = pooled_ols(delta_flow, x)
    bp, bn = fit.coefficients[1], fit.coefficients[2]
    # Wald: (b+ - b-)^2 / Var(b+ - b-) ~ chi2(1) under H0
    c = np.array([0.0, 1.0, -1.0])
    var_diff = float(c @ fit.cov @ c)
    wald = (bp - bn) ** 2 / var_diff if var_diff > 0 else np.nan
    p = float(stats.chi2.sf(wald, df=1)) if np.isfinite(wald) else np.nan
    ratio = bn / bp if abs(bp) > 1e-12 else np.nan
    return AsymmetryFit(investor=investor, beta_pos=bp, beta_neg=bn,
                        t_pos=fit.t_stats[1], t_neg=fit.t_stats[2], ratio=ratio,
                        wald_stat=wald, p_value=p,
                        n_pos_shocks=n_pos, n_neg_shocks=n_neg)


@dataclass
class BootstrapResult:
    statistic: str
    point: float
    ci_lower: float
    ci_upper: float
    iterations: int
    block_length: int
    degenerate: bool = False
    coverage_flag: bool = False  # point outside its own CI (resampling noise)


def bootstrap_ci(
    statistic: Callable[[np.ndarray], float],
    returns: np.ndarray,
    iterations: int = 1000,
    block_length: int = 10,
    seed: int = 0,
    name: str = "statistic",
) -> BootstrapResult:
    """Circular block bootstrap percentile CI (2.5 / 97.5) over daily returns."""
    returns = np.asarray(returns, dtype=float)
    T = len(returns)
    if T < 10 * block_length:
        raise ValueError(f"series length {T} < 10x block length {block_length}")
    point = float(statistic(returns))
    if not np.isfinite(point):
        return BootstrapResult(statistic=name, point=point, ci_lower=np.nan,
                               ci_upper=np.nan, iterations=iterations,
                               block_length=block_length, degenerate=True)
    rng = np.random.default_rng(seed)
    n_blocks = int(np.ceil(T / block_length))
    starts = rng.integers(0, T, size=(iterations, n_blocks))
    # circular block indices, truncated to length T
    offsets = np.arange(block_length)
    idx = (starts[:, :, None] + offsets[None, None, :]).reshape(iterations, -1)[:, :T] % T
    samples = returns[idx]
    draws = np.array([statistic(samples[i]) for i in range(iterations)])
    draws = draws[np.isfinite(draws)]
    if len(draws) == 0:
        return BootstrapResult(statistic=name, point=point, ci_lower=np.nan,
                               ci_upper=np.nan, iterations=iterations,
                               block_length=block_length, degenerate=True)
    lo, hi = np.percentile(draws, [2.5, 97.5])
    return BootstrapResult(statistic=name, point=point, ci_lower=float(lo),
                           ci_upper=float(hi), iterations=iterations,
                           block_length=block_length,
                           coverage_flag=not (lo <= point <= hi))
