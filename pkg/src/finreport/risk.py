"""EGARCH volatility, Gaussian VaR and VaR evaluation.

The log-variance recursion is

    ln s2_t = omega + sum_l alpha_l (|z_{t-l}| - E|z|)
                    + sum_j beta_j ln s2_{t-j} + sum_k gamma_k z_{t-k}^2

with standardised residuals z_t = e_t / s_t and E|z| = sqrt(2/pi). The
``signed`` variant replaces gamma_k z^2 by the signed term gamma_k z.
Before the sample starts, ln s2 equals the log of the residual sample
variance and each shock term sits at its expectation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .errors import NumericalError, ValidationError

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

logger = logging.getLogger(__name__)

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
LN_VAR_LIMIT = 700.0
VARIANTS = {"squared": 0, "signed": 1}
_PENALTY = 1e12
BETA_SUM_MAX = 0.999


@dataclass(frozen=True)
class EgarchParams:
    omega: float
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    gamma: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if len(self.beta) != len(self.gamma):
            raise ValidationError("beta and gamma must both have q entries")
        if not all(math.isfinite(v) for v in self.to_vector()):
            raise ValidationError("EGARCH parameters must be finite")

    @property
    def p(self) -> int:
        return len(self.alpha)

    @property
    def q(self) -> int:
        return len(self.beta)

    @property
    def stationary(self) -> bool:
        return sum(self.beta) < 1.0 and all(abs(b) < 1.0 for b in self.beta)

    def monotone_response(self, variant: str = "squared") -> bool:
        """True when a larger |z| can never lower the next log-variance.

        Without this the recursion can feed on itself out of sample: a small
        sigma makes z large, which pushes sigma lower still.
        """
        if variant == "squared":
            return all(a >= 0.0 for a in self.alpha) and all(g >= 0.0 for g in self.gamma)
        return sum(self.alpha) >= sum(abs(g) for g in self.gamma)

    def to_vector(self) -> np.ndarray:
        return np.array((self.omega,) + self.alpha + self.beta + self.gamma, dtype=np.float64)

    @classmethod
    def from_vector(cls, vec, p: int, q: int) -> "EgarchParams":
        vec = [float(v) for v in vec]
        if len(vec) != 1 + p + 2 * q:
            raise ValidationError(f"expected {1 + p + 2 * q} parameters, got {len(vec)}")
        return cls(vec[0], tuple(vec[1:1 + p]), tuple(vec[1 + p:1 + p + q]), tuple(vec[1 + p + q:]))

    def to_dict(self) -> dict:
        return {"omega": self.omega, "alpha": list(self.alpha), "beta": list(self.beta),
                "gamma": list(self.gamma)}


@njit(cache=True)
def _recursion(vec, e, p, q, init_lnvar, variant):
    """Return (ln s2 array, status); status 0 ok, 1 overflow/underflow."""
    n = e.shape[0]
    omega = vec[0]
    lnvar = np.empty(n)
    z = np.empty(n)
    for t in range(n):
        v = omega
        for l in range(1, p + 1):
            if t - l >= 0:
                v += vec[l] * (abs(z[t - l]) - SQRT_2_OVER_PI)
        for j in range(1, q + 1):
            b = vec[p + j]
            g = vec[p + q + j]
            if t - j >= 0:
                v += b * lnvar[t - j]
                if variant == 0:
                    v += g * z[t - j] * z[t - j]
                else:
                    v += g * z[t - j]
            else:
                v += b * init_lnvar
                if variant == 0:
                    v += g
        if not (v < LN_VAR_LIMIT and v > -LN_VAR_LIMIT):
            return lnvar, 1
        lnvar[t] = v
        z[t] = e[t] / math.exp(0.5 * v)
    return lnvar, 0


@njit(cache=True)
def _gaussian_loglik(lnvar, e):
    n = e.shape[0]
    total = 0.0
    c = 0.5 * math.log(2.0 * math.pi)
    for t in range(n):
        total += -c - 0.5 * lnvar[t] - 0.5 * e[t] * e[t] / math.exp(lnvar[t])
    return total


@dataclass
class VolSeries:
    sigma: np.ndarray
    mu: np.ndarray
    residual: np.ndarray

    def __post_init__(self):
        if np.any(~np.isfinite(self.sigma)) or np.any(self.sigma <= 0):
            raise NumericalError("volatility must be finite and positive")

    def __len__(self) -> int:
        return self.sigma.shape[0]


def _variant_code(variant: str) -> int:
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown EGARCH variant {variant!r}") from None


def egarch_filter(params: EgarchParams, residuals, init_var: float | None = None,
                  variant: str = "squared", mu: float | np.ndarray = 0.0) -> VolSeries:
    """Run the log-variance recursion over ``residuals``.

    ``sigma[t]`` only uses residuals before t, so it is the one-step-ahead
    volatility forecast for date t.
    """
    e = np.ascontiguousarray(residuals, dtype=np.float64)
    if e.shape[0] <= max(params.p, params.q):
        raise ValidationError("residual series shorter than the model order")
    init_var = float(np.var(e)) if init_var is None else float(init_var)
    if not init_var > 0:
        raise ValidationError("initial variance must be positive")
    lnvar, status = _recursion(params.to_vector(), e, params.p, params.q,
                               math.log(init_var), _variant_code(variant))
    if status:
        raise NumericalError("ln sigma^2 left [-700, 700]; parameters are explosive")
    mu_arr = np.broadcast_to(np.asarray(mu, dtype=np.float64), e.shape).copy()
    return VolSeries(np.exp(0.5 * lnvar), mu_arr, e.copy())


def egarch_loglik(params: EgarchParams, residuals, init_var: float | None = None,
                  variant: str = "squared") -> float:
    e = np.ascontiguousarray(residuals, dtype=np.float64)
    init_var = float(np.var(e)) if init_var is None else float(init_var)
    lnvar, status = _recursion(params.to_vector(), e, params.p, params.q,
                               math.log(init_var), _variant_code(variant))
    if status:
        return -math.inf
    return float(_gaussian_loglik(lnvar, e))


def simulate_egarch(params: EgarchParams, n: int, rng: np.random.Generator, mu: float = 0.0,
                    variant: str = "squared", burn: int = 500) -> np.ndarray:
    """Draw ``n`` returns from the model with standard-normal innovations."""
    code = _variant_code(variant)
    total = n + burn
    z = rng.standard_normal(total)
    lnvar = np.empty(total)
    stationary = params.omega + (sum(params.gamma) if code == 0 else 0.0)
    level = stationary / (1.0 - sum(params.beta)) if sum(params.beta) < 1 else params.omega
    for t in range(total):
        v = params.omega
        for l, a in enumerate(params.alpha, start=1):
            if t - l >= 0:
                v += a * (abs(z[t - l]) - SQRT_2_OVER_PI)
        for j, (b, g) in enumerate(zip(params.beta, params.gamma), start=1):
            if t - j >= 0:
                v += b * lnvar[t - j] + (g * z[t - j] ** 2 if code == 0 else g * z[t - j])
            else:
                v += b * level + (g if code == 0 else 0.0)
        lnvar[t] = v
    return mu + np.exp(0.5 * lnvar[burn:]) * z[burn:]


@dataclass
class EgarchFit:
    params: EgarchParams
    vol: VolSeries
    loglik: float
    mu: float
    init_var: float
    variant: str
    start_logliks: list[float] = field(default_factory=list)
    n_feasible: int = 0


def _start_points(p: int, q: int, ln_s2: float, n_starts: int, rng: np.random.Generator,
                  variant: str) -> list[np.ndarray]:
    starts = []
    for k in range(n_starts):
        if k == 0:
            alpha, beta_tot, gamma = np.full(p, 0.1), 0.9, np.full(q, 0.02)
        else:
            alpha = rng.uniform(0.0, 0.3, size=p)
            beta_tot = rng.uniform(0.0, 0.95)
            if variant == "squared":
                gamma = rng.uniform(0.0, 0.15, size=q)
            else:
                gamma = rng.uniform(-1.0, 1.0, size=q) * alpha.sum() / q
        beta = np.full(q, beta_tot / q)
        shock_mean = gamma.sum() if variant == "squared" else 0.0
        omega = (1.0 - beta_tot) * ln_s2 - shock_mean
        starts.append(np.concatenate([[omega], alpha, beta, gamma]))
    return starts


def fit_egarch(returns, p: int = 1, q: int = 1, n_starts: int = 20, seed: int = 0,
               variant: str = "squared", min_length: int = 250, max_iter: int = 4000) -> EgarchFit:
    """Gaussian quasi-maximum-likelihood fit by multi-start Nelder-Mead.

    The mean is the sample mean of ``returns``; residuals are deviations
    from it. Infeasible points: sum(beta) >= 0.999, any |beta| >= 1, a shock
    response that is not monotone in |z| (see
    :meth:`EgarchParams.monotone_response`) or an exploding recursion. The
    best feasible optimum over all starts is returned.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.shape[0] < min_length:
        raise ValidationError(f"need at least {min_length} returns, got {r.shape[0]}")
    if p < 1 or q < 1:
        raise ValidationError("EGARCH orders must be >= 1")
    code = _variant_code(variant)
    mu = float(r.mean())
    e = np.ascontiguousarray(r - mu)
    init_var = float(np.var(e))
    if not init_var > 0:
        raise ValidationError("returns have zero variance")
    ln_s2 = math.log(init_var)

    def negll(vec):
        betas = vec[1 + p:1 + p + q]
        if betas.sum() >= BETA_SUM_MAX or np.any(np.abs(betas) >= 1.0):
            return _PENALTY
        alphas, gammas = vec[1:1 + p], vec[1 + p + q:]
        if code == 0:
            if np.any(alphas < 0.0) or np.any(gammas < 0.0):
                return _PENALTY
        elif alphas.sum() < np.abs(gammas).sum():
            return _PENALTY
        lnvar, status = _recursion(vec, e, p, q, ln_s2, code)
        if status:
            return _PENALTY
        val = -_gaussian_loglik(lnvar, e)
        return val if math.isfinite(val) else _PENALTY

    rng = np.random.default_rng(seed)
    best_x, best_f = None, math.inf
    start_lls, n_feasible = [], 0
    for x0 in _start_points(p, q, ln_s2, n_starts, rng, variant):
        f0 = negll(x0)
        start_lls.append(-f0 if f0 < _PENALTY else -math.inf)
        res = minimize(negll, x0, method="Nelder-Mead",
                       options={"maxiter": max_iter, "maxfev": 2 * max_iter,
                                "xatol": 1e-7, "fatol": 1e-9})
        if res.fun >= _PENALTY:
            continue
        n_feasible += 1
        if res.fun < best_f:
            best_x, best_f = np.array(res.x), float(res.fun)
    if best_x is None:
        raise NumericalError("no feasible EGARCH parameters found from any start")
    params = EgarchParams.from_vector(best_x, p, q)
    vol = egarch_filter(params, e, init_var=init_var, variant=variant, mu=mu)
    return EgarchFit(params, vol, -best_f, mu, init_var, variant, start_lls, n_feasible)


# ---------------------------------------------------------------------------
# Value at risk


@dataclass(frozen=True)
class VarEstimate:
    var_value: float
    alpha_level: float
    z_alpha: float
    mu: float
    sigma: float


@dataclass
class VarSeries:
    mu: np.ndarray
    sigma: np.ndarray
    var: np.ndarray
    alpha_level: float
    z_alpha: float

    def __len__(self) -> int:
        return self.var.shape[0]

    def __getitem__(self, i: int) -> VarEstimate:
        return VarEstimate(float(self.var[i]), self.alpha_level, self.z_alpha,
                           float(self.mu[i]), float(self.sigma[i]))


def normal_quantile(alpha_level: float) -> float:
    return float(norm.ppf(alpha_level))


def compute_var(vol: VolSeries | tuple, alpha_level: float = 0.95) -> VarSeries:
    """VaR_t = mu_t - sigma_t * z_alpha for every date of ``vol``.

    ``vol`` may also be a ``(mu, sigma)`` pair of scalars or arrays.
    """
    if not 0.5 < alpha_level < 1.0:
        raise ValidationError("alpha_level must lie in (0.5, 1)")
    if isinstance(vol, VolSeries):
        mu, sigma = vol.mu, vol.sigma
    else:
        mu, sigma = vol
    mu, sigma = np.broadcast_arrays(np.atleast_1d(np.asarray(mu, float)),
                                    np.atleast_1d(np.asarray(sigma, float)))
    z = normal_quantile(alpha_level)
    return VarSeries(mu.copy(), sigma.copy(), mu - sigma * z, alpha_level, z)


@dataclass(frozen=True)
class VarMetrics:
    rmse: float
    mae: float
    coverage_rate: float
    var_loss: float
    n_pairs: int
    n_dates: int

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "coverage_rate": self.coverage_rate,
                "var_loss": self.var_loss, "n_pairs": self.n_pairs, "n_dates": self.n_dates}


def actual_var(realized, window: int, alpha_level: float) -> np.ndarray:
    """Trailing empirical lower-tail quantile; NaN until the window fills."""
    r = np.asarray(realized, dtype=np.float64)
    out = np.full(r.shape, np.nan)
    for t in range(window - 1, r.shape[0]):
        out[t] = np.quantile(r[t - window + 1:t + 1], 1.0 - alpha_level)
    return out


def evaluate_var(predicted: VarSeries, realized_returns, window: int = 60,
                 start: int = 0) -> tuple[VarMetrics, np.ndarray]:
    """Compare predicted VaR with the trailing empirical quantile of realised returns.

    Only dates from index ``start`` on are scored; earlier realised returns
    still feed the trailing window. RMSE, MAE and the mean absolute VaR loss
    use scored dates whose window is full; the coverage rate (share of dates
    with return >= VaR) uses every scored date. Returns the metrics and the
    ActualVaR series.
    """
    r = np.asarray(realized_returns, dtype=np.float64)
    if r.shape != predicted.var.shape:
        raise ValidationError("predicted VaR and realized returns are not aligned")
    if window < 20:
        raise ValidationError("window must be >= 20")
    if window > r.shape[0]:
        raise ValidationError(f"window {window} longer than series of {r.shape[0]}")
    if not 0 <= start < r.shape[0]:
        raise ValidationError("start index outside the series")
    act = actual_var(r, window, predicted.alpha_level)
    scored = np.zeros(r.shape, dtype=bool)
    scored[start:] = True
    ok = scored & ~np.isnan(act)
    if not ok.any():
        raise ValidationError("no scored date has a full trailing window")
    diff = predicted.var[ok] - act[ok]
    metrics = VarMetrics(
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        mae=float(np.mean(np.abs(diff))),
        coverage_rate=float(np.mean(r[scored] >= predicted.var[scored])),
        var_loss=float(np.mean(np.abs(diff))),
        n_pairs=int(ok.sum()),
        n_dates=int(scored.sum()),
    )
    return metrics, act


def aggregate_var_metrics(per_symbol: Mapping[str, tuple[VarSeries, np.ndarray]], window: int = 60,
                          aggregation: str = "per_stock", start: int = 0) -> VarMetrics:
    """Combine several symbols' VaR evaluations.

    ``per_stock`` averages each symbol's metrics. ``cross_section`` applies
    the loss across stocks on each date and averages those over dates; it
    needs every series to share the same dates.
    """
    if not per_symbol:
        raise ValidationError("no series to aggregate")
    if aggregation == "per_stock":
        ms = [evaluate_var(v, r, window, start)[0] for v, r in per_symbol.values()]
        return VarMetrics(
            rmse=float(np.mean([m.rmse for m in ms])),
            mae=float(np.mean([m.mae for m in ms])),
            coverage_rate=float(np.mean([m.coverage_rate for m in ms])),
            var_loss=float(np.mean([m.var_loss for m in ms])),
            n_pairs=sum(m.n_pairs for m in ms),
            n_dates=sum(m.n_dates for m in ms),
        )
    if aggregation == "cross_section":
        lengths = {len(v) for v, _ in per_symbol.values()}
        if len(lengths) != 1:
            raise ValidationError("cross-sectional aggregation needs equal-length series")
        preds = np.vstack([v.var for v, _ in per_symbol.values()])
        reals = np.vstack([np.asarray(r, float) for _, r in per_symbol.values()])
        alpha_level = next(iter(per_symbol.values()))[0].alpha_level
        acts = np.vstack([actual_var(r, window, alpha_level) for r in reals])
        cols = ~np.isnan(acts).any(axis=0)
        cols[:start] = False
        reals_scored = reals[:, start:]
        diff = preds[:, cols] - acts[:, cols]
        per_date_loss = np.mean(np.abs(diff), axis=0)
        per_date_sq = np.sqrt(np.mean(diff ** 2, axis=0))
        return VarMetrics(
            rmse=float(np.mean(per_date_sq)),
            mae=float(np.mean(per_date_loss)),
            coverage_rate=float(np.mean(reals_scored >= preds[:, start:])),
            var_loss=float(np.mean(per_date_loss)),
            n_pairs=int(diff.size),
            n_dates=int(reals_scored.shape[1]),
        )
    raise ValueError(f"unknown aggregation {aggregation!r}")
