"""Three-state Markov-switching model on market returns.

Hamilton forward filter (log-space), Kim backward smoother, EM estimation
with closed-form M-step, economic regime labeling, and the
regime-conditional predictive regression of next-day returns on the
filtered flow signal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np


from .errors import DegenerateRegime, InsufficientRegimeSample, ZeroLikelihood
from .econometrics import pooled_ols

BULL, NORMAL, CRISIS = "Bull", "Normal", "Crisis"
SIGMA_FLOOR = 1e-6


@dataclass
class RegimeModel:
    mu: np.ndarray           # per-regime mean return
    sigma: np.ndarray        # per-regime volatility
    transition: np.ndarray   # P[i, j] = Pr(s_t = j | s_{t-1} = i)
    loglik: float = np.nan
    labels: Dict[int, str] = field(default_factory=dict)
    tie_flag: bool = False
    separation_flag: bool = False  # set when two regimes are nearly identical
    loglik_path: list = field(default_factory=list)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        k = len(self.mu)
        if self.transition.shape != (k, k):
            raise ValueError("transition matrix shape mismatch")
        if np.any(np.abs(self.transition.sum(axis=1) - 1.0) > 1e-10):
            raise ValueError("transition matrix rows must sum to 1")
        if np.any(self.sigma <= 0):
            raise ValueError("regime volatilities must be positive")

    @property
    def n_regimes(self):
        return len(self.mu)

    def stationary_distribution(self) -> np.ndarray:
        vals, vecs = np.linalg.eig(self.transition.T)
        i = int(np.argmin(np.abs(vals - 1.0)))
        pi = np.real(vecs[:, i])
        pi = np.abs(pi)
        return pi / pi.sum()


@dataclass
class RegimePath:
    filtered: np.ndarray   # (T, k) xi_{t|t}
    smoothed: Optional[np.ndarray]  # (T, k) xi_{t|T}
    states: np.ndarray     # argmax filtered per t
    crisis_flag: np.ndarray
    loglik: float


@dataclass
class RegimeRegressionRow:
    regime: str
    alpha: float
    beta: float
    t_stat: float
    r2: float
    n_obs: int
    skipped: bool = False


@dataclass
class RegimeRegression:
    rows: Dict[str, RegimeRegressionRow]

    def beta(self, label):
        return self.rows[label].beta


def _log_gauss(returns: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """(T, k) log N(r_t; mu_s, sigma_s^2)."""
    z = (returns[:, None] - mu[None, :]) / sigma[None, :]
    return -0.5 * z ** 2 - np.log(sigma[None, :]) - 0.5 * np.log(2 * np.pi)


def hamilton_filter(
    returns: np.ndarray,
    model: RegimeModel,
    initial: Optional[np.ndarray] = None,
    crisis_threshold: float = 0.30,
) -> RegimePath:
    """Forward recursion in log space; returns filtered probabilities and
    the total log-likelihood.
    """
    returns = np.asarray(returns, dtype=float)
    T, k = len(returns), model.n_regimes
    if T < 1:
        raise ValueError("need at least one return")
    log_dens = _log_gauss(returns, model.mu, model.sigma)
    if not np.all(np.isfinite(log_dens)):
        raise ZeroLikelihood("non-finite density encountered")
    pi0 = model.stationary_distribution() if initial is None else np.asarray(initial, float)

    # scaled forward recursion: densities are exponentiated against their
    # per-step max so the normalizers carry the log-likelihood exactly
    shift = log_dens.max(axis=1)
    dens = np.exp(log_dens - shift[:, None])
    P = model.transition
    filtered = np.empty((T, k))
    pred = pi0
    loglik = 0.0
    for t in range(T):
        joint = pred * dens[t]
        s = joint.sum()
        if s <= 0:
            raise ZeroLikelihood(f"all densities underflowed at t={t}")
        loglik += np.log(s) + shift[t]
        filtered[t] = joint / s
        pred = filtered[t] @ P
    states = filtered.argmax(axis=1)
    crisis_idx = _crisis_index(model)
    crisis_flag = filtered[:, crisis_idx] > crisis_threshold if crisis_idx is not None \
        else np.zeros(T, dtype=bool)
    return RegimePath(filtered=filtered, smoothed=None, states=states,
                      crisis_flag=crisis_flag, loglik=float(loglik))


def kim_smoother(path: RegimePath, model: RegimeModel) -> np.ndarray:
    """Backward pass producing xi_{t|T}; final period equals the filtered."""
    filt = path.filtered
    T, k = filt.shape
    P = model.transition
    smoothed = np.empty_like(filt)
    smoothed[-1] = filt[-1]
    for t in range(T - 2, -1, -1):
        pred = filt[t] @ P  # xi_{t+1|t}
        ratio = np.divide(smoothed[t + 1], pred,
                          out=np.zeros_like(pred), where=pred > 0)
        smoothed[t] = filt[t] * (P @ ratio)
        s = smoothed[t].sum()
        if s > 0:
            smoothed[t] /= s
    return smoothed


def _crisis_index(model: RegimeModel):
    for idx, lab in model.labels.items():
        if lab == CRISIS:
            return idx
    if len(model.labels) == 0:
        return int(np.argmax(model.sigma))
    return None


def label_regimes(model: RegimeModel) -> Dict[int, str]:
    """Crisis = highest sigma; Bull = higher mu of the rest; Normal = other.

    Ties on sigma (within 1e-10) break by index order and set tie_flag.
    """
    sig = model.sigma
    order = np.argsort(sig)
    crisis = int(order[-1])
    model.tie_flag = bool(abs(sig[order[-1]] - sig[order[-2]]) < 1e-10)
    rest = [i for i in range(model.n_regimes) if i != crisis]
    bull = rest[int(np.argmax(model.mu[rest]))]
    normal = [i for i in rest if i != bull][0]
    labels = {bull: BULL, normal: NORMAL, crisis: CRISIS}
    model.labels = labels
    return labels


def _em_init(returns: np.ndarray, k: int, perturb: float = 0.0,
             rng: Optional[np.random.Generator] = None) -> RegimeModel:
    """Tertile warm start: sort returns, split by value, seed (mu, sigma)."""
    srt = np.sort(returns)
    chunks = np.array_split(srt, k)
    mu = np.array([c.mean() for c in chunks])
    sigma = np.array([max(c.std(), SIGMA_FLOOR * 10) for c in chunks])
    if perturb > 0 and rng is not None:
        mu = mu + rng.normal(0, perturb * returns.std(), size=k)
        sigma = sigma * np.exp(rng.normal(0, perturb, size=k))
    P = np.full((k, k), 0.05)
    np.fill_diagonal(P, 0.9)
    P /= P.sum(axis=1, keepdims=True)
    return RegimeModel(mu=mu, sigma=sigma, transition=P)


def fit_em(
    returns: np.ndarray,
    n_regimes: int = 3,
    tol: float = 1e-6,
    max_iter: int = 500,
    max_restarts: int = 5,
    seed: int = 0,
) -> RegimeModel:
    """EM on (mu, sigma, P) with smoothed E-step and closed-form M-step.

    Deterministic tertile initialization; degenerate runs (a regime sigma
    collapsing below floor) restart from a perturbed init, up to
    max_restarts times.
    """
    returns = np.asarray(returns, dtype=float)
    rng = np.random.default_rng(seed)
    last_err = None
    for attempt in range(max_restarts + 1):
        model = _em_init(returns, n_regimes, perturb=0.0 if attempt == 0 else 0.3, rng=rng)
        try:
            model = _em_run(returns, model, tol, max_iter)
            label_regimes(model)
            model.separation_flag = _poor_separation(returns, model)
            return model
        except DegenerateRegime as exc:
            last_err = exc
    raise last_err


def _em_run(returns, model, tol, max_iter):
    T, k = len(returns), model.n_regimes
    prev_ll = -np.inf
    ll_path = []
    for _ in range(max_iter):
        path = hamilton_filter(returns, model)
        smoothed = kim_smoother(path, model)
        # pairwise smoothed transition probabilities, accumulated over t
        P = model.transition
        filt = path.filtered
        pred = filt[:-1] @ P
        ratio = np.where(pred > 0, smoothed[1:] / pred, 0.0)
        xi_pair = P * (filt[:-1].T @ ratio)
        # M-step
        w = smoothed  # (T, k)
        wsum = w.sum(axis=0)
        mu = (w * returns[:, None]).sum(axis=0) / wsum
        var = (w * (returns[:, None] - mu[None, :]) ** 2).sum(axis=0) / wsum
        sigma = np.sqrt(var)
        if np.any(sigma < SIGMA_FLOOR):
            raise DegenerateRegime(f"regime sigma collapsed: {sigma}")
        trans = xi_pair / xi_pair.sum(axis=1, keepdims=True)
        ll_path.append(path.loglik)
        model = RegimeModel(mu=mu, sigma=sigma, transition=trans, loglik=path.loglik,
                            loglik_path=ll_path)
        if path.loglik - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = path.loglik
    return model


def _poor_separation(returns: np.ndarray, model: RegimeModel,
                     min_gain: float = 0.02) -> bool:
    """Flag fits whose regimes barely improve on a single Gaussian.

    Gain is the per-observation log-likelihood advantage of the switching
    model over one Gaussian; overlapping merged regimes land near zero.
    """
    mean, sd = returns.mean(), returns.std()
    ll1 = float(np.sum(-0.5 * ((returns - mean) / sd) ** 2
                       - np.log(sd) - 0.5 * np.log(2 * np.pi)))
    return (model.loglik - ll1) / len(returns) < min_gain


def brute_force_posterior(returns, model, initial=None):
    """Exhaustive path enumeration oracle for T <= 10.

    Returns (filtered (T,k), smoothed (T,k), loglik) by summing over all
    k^T state paths. Independent of the recursive implementations.
    """
    returns = np.asarray(returns, dtype=float)
    T, k = len(returns), model.n_regimes
    if T > 10:
        raise ValueError("oracle limited to T <= 10")
    pi0 = model.stationary_distribution() if initial is None else np.asarray(initial, float)
    dens = np.exp(_log_gauss(returns, model.mu, model.sigma))
    P = model.transition

    import itertools
    smoothed = np.zeros((T, k))
    filtered = np.zeros((T, k))
    total = 0.0
    # joint weight of every full path, plus per-prefix marginals for filtering
    prefix_w = {(): 1.0}
    prefix_totals = []
    for t in range(T):
        new = {}
        for pre, wgt in prefix_w.items():
            last = pre[-1] if pre else None
            for s in range(k):
                trans = pi0[s] if last is None else P[last, s]
                new[pre + (s,)] = wgt * trans * dens[t, s]
        prefix_w = new
        tot_t = sum(new.values())
        prefix_totals.append(tot_t)
        marg = np.zeros(k)
        for pre, wgt in new.items():
            marg[pre[-1]] += wgt
        filtered[t] = marg / tot_t
    total = sum(prefix_w.values())
    for path_states, wgt in prefix_w.items():
        for t, s in enumerate(path_states):
            smoothed[t, s] += wgt
    smoothed /= total
    return filtered, smoothed, float(np.log(total))


def regime_conditional_regression(
    flows: np.ndarray,
    next_returns: np.ndarray,
    states: np.ndarray,
    labels: Dict[int, str],
    min_obs: int = 30,
) -> RegimeRegression:
    """Separate OLS of r_{t+1} on the filtered flow within each regime.

    Inputs are pooled panel arrays already aligned so that flows[t] and
    states[t] are time-t information and next_returns[t] is the t+1 return.
    Regimes with fewer than min_obs usable rows are skipped and flagged.
    """
    flows = np.asarray(flows, dtype=float)
    next_returns = np.asarray(next_returns, dtype=float)
    states = np.asarray(states)
    rows = {}
    for idx, label in labels.items():
        mask = states == idx
        n = int(mask.sum())
        if n < min_obs:
            rows[label] = RegimeRegressionRow(
                regime=label, alpha=np.nan, beta=np.nan, t_stat=np.nan,
                r2=np.nan, n_obs=n, skipped=True)
            continue
        x = flows[mask][:, None]
        fit = pooled_ols(next_returns[mask], x, add_intercept=True)
        rows[label] = RegimeRegressionRow(
            regime=label, alpha=fit.coefficients[0], beta=fit.coefficients[1],
            t_stat=fit.t_stats[1], r2=fit.r2, n_obs=n)
    return RegimeRegression(rows=rows)
