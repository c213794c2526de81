"""FF5 and FF5-News factor construction, time-series OLS and the GRS test.

Each characteristic is sorted independently against size (2 x 3 sorts);
long-short factors combine the intersection portfolios with the fixed
formulas below. Intersection portfolios that are empty on a date are
imputed from the other portfolios of the same bracketed average, or from
the whole formula when that bracket is empty too.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .classifier import Label
from .errors import RankDeficientError, ValidationError
from .market_data import PanelRow, StockFactorRow

logger = logging.getLogger(__name__)

FF5_FACTORS = ("mkt_excess", "smb", "hml", "rmw", "cma")
FF5_NEWS_FACTORS = FF5_FACTORS + ("news",)

# Three-way groups per dimension, ordered (high-characteristic, middle, low-characteristic).
DIMENSIONS = {
    "bp": ("H", "N", "L"),
    "op": ("R", "N", "W"),
    "inv": ("A", "N", "C"),
}
NEWS_GROUPS = ("P", "M", "N")
_NEWS_OF_LABEL = {Label.POSITIVE: "P", Label.NEUTRAL: "M", Label.NEGATIVE: "N"}


@dataclass(frozen=True)
class Breakpoints:
    size: float = 50.0
    low: float = 30.0
    high: float = 70.0


@dataclass(frozen=True)
class GroupAssignment:
    size: str
    bp: str
    op: str
    inv: str
    news: str | None = None

    def group(self, dim: str) -> str | None:
        return getattr(self, dim)


def _three_way(values: np.ndarray, groups: tuple[str, str, str], bp: Breakpoints, name: str) -> list[str]:
    high_g, mid_g, low_g = groups
    if np.ptp(values) == 0:
        logger.warning("characteristic %s is constant across the cross-section; all assigned %s",
                       name, mid_g)
        return [mid_g] * len(values)
    lo = np.percentile(values, bp.low)
    hi = np.percentile(values, bp.high)
    return [low_g if v <= lo else high_g if v > hi else mid_g for v in values]


def sort_groups(
    cross_section: Sequence[StockFactorRow],
    news_labels: Mapping[str, Label | None] | None = None,
    breakpoints: Breakpoints = Breakpoints(),
) -> dict[str, GroupAssignment]:
    """Assign size, BP, profitability, investment (and news) groups on one date.

    Size splits at the median market cap (at or below is small); the other
    characteristics split at the 30th and 70th percentiles. News groups come
    straight from classifier labels; a stock without a label lands in M.
    """
    rows = list(cross_section)
    if len(rows) < 6:
        raise ValidationError(f"cross-section has {len(rows)} stocks; at least 6 are needed")
    caps = np.array([r.mktcap for r in rows])
    cut = np.percentile(caps, breakpoints.size)
    if np.ptp(caps) == 0:
        logger.warning("market caps are all equal; every stock is classed small")
    size = ["S" if c <= cut else "B" for c in caps]
    dims = {
        dim: _three_way(np.array([getattr(r, dim) for r in rows]), groups, breakpoints, dim)
        for dim, groups in DIMENSIONS.items()
    }
    out = {}
    missing = 0
    for i, r in enumerate(rows):
        news = None
        if news_labels is not None:
            label = news_labels.get(r.symbol)
            if label is None:
                missing += 1
                news = "M"
            else:
                news = _NEWS_OF_LABEL[Label(label)]
        out[r.symbol] = GroupAssignment(size[i], dims["bp"][i], dims["op"][i], dims["inv"][i], news)
    if missing:
        logger.debug("%d stocks without a news label placed in M", missing)
    return out


# ---------------------------------------------------------------------------
# Formulas on intersection-portfolio returns. ``p`` maps size -> group -> return
# (NaN for an empty portfolio).


def _impute(term: list[float], formula: list[float], fallback: Sequence[float] = ()) -> list[float]:
    present = [v for v in term if not math.isnan(v)]
    if present:
        fill = sum(present) / len(present)
    else:
        pool = [v for v in formula if not math.isnan(v)]
        if not pool:
            pool = [v for v in fallback if not math.isnan(v)]
        if not pool:
            raise ValidationError("every portfolio in a factor formula is empty")
        fill = sum(pool) / len(pool)
    return [fill if math.isnan(v) else v for v in term]


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def spread(long: list[float], short: list[float], fallback: Sequence[float] = ()) -> float:
    """Mean of ``long`` minus mean of ``short`` with empty-portfolio imputation.

    An empty portfolio takes the mean of the non-empty ones on its side. A
    side with nothing in it takes the mean of the whole formula, and if the
    formula is empty too, the mean of ``fallback`` (both sides then get the
    same value and the spread is zero).
    """
    formula = long + short
    return _mean(_impute(long, formula, fallback)) - _mean(_impute(short, formula, fallback))


def smb_component(p: Mapping[str, Mapping[str, float]], groups: Sequence[str]) -> float:
    """(S_g1 + S_g2 + S_g3)/3 - (B_g1 + B_g2 + B_g3)/3."""
    return spread([p["S"][g] for g in groups], [p["B"][g] for g in groups])


def high_minus_low(p: Mapping[str, Mapping[str, float]], high: str, low: str) -> float:
    """(B_high + S_high)/2 - (B_low + S_low)/2.

    Falls back on the middle-group portfolios when neither extreme has stocks.
    """
    everything = [v for row in p.values() for v in row.values()]
    return spread([p["B"][high], p["S"][high]], [p["B"][low], p["S"][low]], everything)


def ff5_formulas(portfolios: Mapping[str, Mapping[str, Mapping[str, float]]],
                 with_news: bool = False) -> dict[str, float]:
    """Long-short factors from intersection returns keyed ``[dim][size][group]``."""
    out = {
        "smb_bp": smb_component(portfolios["bp"], DIMENSIONS["bp"]),
        "smb_op": smb_component(portfolios["op"], DIMENSIONS["op"]),
        "smb_inv": smb_component(portfolios["inv"], DIMENSIONS["inv"]),
        "hml": high_minus_low(portfolios["bp"], "H", "L"),
        "rmw": high_minus_low(portfolios["op"], "R", "W"),
        "cma": high_minus_low(portfolios["inv"], "C", "A"),
    }
    parts = [out["smb_bp"], out["smb_op"], out["smb_inv"]]
    if with_news:
        out["smb_news"] = smb_component(portfolios["news"], NEWS_GROUPS)
        out["news"] = high_minus_low(portfolios["news"], "P", "N")
        parts.append(out["smb_news"])
    out["smb"] = sum(parts) / len(parts)
    return out


def intersection_returns(
    returns: Mapping[str, float],
    groups: Mapping[str, GroupAssignment],
    dims: Iterable[str],
    weights: Mapping[str, float] | None = None,
) -> dict[str, dict[str, dict[str, float]]]:
    """Equal- (or ``weights``-) weighted returns of every size x group portfolio."""
    out = {}
    for dim in dims:
        labels = NEWS_GROUPS if dim == "news" else DIMENSIONS[dim]
        acc = {s: {g: [0.0, 0.0] for g in labels} for s in ("S", "B")}
        for sym, ret in returns.items():
            ga = groups[sym]
            w = 1.0 if weights is None else weights[sym]
            cell = acc[ga.size][ga.group(dim)]
            cell[0] += w * ret
            cell[1] += w
        out[dim] = {s: {g: (num / den if den > 0 else math.nan) for g, (num, den) in row.items()}
                    for s, row in acc.items()}
    return out


def count_empty(portfolios) -> int:
    return sum(math.isnan(v) for dim in portfolios.values() for row in dim.values() for v in row.values())


@dataclass
class FactorReturnsSeries:
    dates: list[date]
    columns: dict[str, np.ndarray]
    components: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("factor dates must be strictly increasing")
        for name, col in self.columns.items():
            if col.shape != (len(self.dates),):
                raise ValidationError(f"column {name} has wrong length")

    @property
    def factor_names(self) -> tuple[str, ...]:
        return tuple(n for n in FF5_NEWS_FACTORS if n in self.columns)

    @property
    def has_news(self) -> bool:
        return "news" in self.columns

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = self.factor_names if names is None else names
        return np.column_stack([self.columns[n] for n in names])

    def subset(self, dates: Iterable[date]) -> "FactorReturnsSeries":
        keep = set(dates)
        idx = [i for i, d in enumerate(self.dates) if d in keep]
        return FactorReturnsSeries(
            [self.dates[i] for i in idx],
            {k: v[idx] for k, v in self.columns.items()},
            {k: v[idx] for k, v in self.components.items()},
        )

    def at(self, day: date) -> dict[str, float]:
        i = self.dates.index(day)
        return {k: float(v[i]) for k, v in self.columns.items()}

    def to_csv(self, path, header_comment: str | None = None) -> None:
        names = list(self.factor_names) + ["rf"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["date"] + names)
            for i, d in enumerate(self.dates):
                w.writerow([d.isoformat()] + [repr(float(self.columns[n][i])) for n in names])

    @classmethod
    def from_csv(cls, path) -> "FactorReturnsSeries":
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        rows = list(reader)
        dates = [date.fromisoformat(r[0]) for r in rows]
        cols = {name: np.array([float(r[j + 1]) for r in rows]) for j, name in enumerate(header[1:])}
        return cls(dates, cols)


def cross_sections(panel: Iterable[PanelRow]) -> dict[date, list[PanelRow]]:
    out: dict[date, list[PanelRow]] = defaultdict(list)
    for row in panel:
        out[row.date].append(row)
    return dict(sorted(out.items()))


def _factor_returns(panel, groups, weighting, risk_free, with_news) -> FactorReturnsSeries:
    if weighting not in ("equal", "value"):
        raise ValueError(f"unknown weighting {weighting!r}")
    risk_free = risk_free or {}
    dims = ("bp", "op", "inv", "news") if with_news else ("bp", "op", "inv")
    out_dates, rows_out, empty = [], defaultdict(list), 0
    for day, rows in cross_sections(panel).items():
        if day not in groups:
            continue
        g = groups[day]
        rets = {r.symbol: r.return_1d for r in rows if r.symbol in g and r.return_1d is not None}
        if not rets:
            continue
        weights = None
        if weighting == "value":
            caps = {r.symbol: r.factors.mktcap for r in rows if r.factors is not None}
            weights = {s: caps[s] for s in rets}
        ports = intersection_returns(rets, g, dims, weights)
        empty += count_empty(ports)
        vals = ff5_formulas(ports, with_news=with_news)
        rf = risk_free.get(day, 0.0)
        if weights is None:
            market = float(np.mean(list(rets.values())))
        else:
            market = sum(weights[s] * r for s, r in rets.items()) / sum(weights.values())
        vals["mkt_excess"] = market - rf
        vals["rf"] = rf
        out_dates.append(day)
        for k, v in vals.items():
            rows_out[k].append(v)
    if empty:
        logger.warning("%d empty intersection portfolios imputed from sibling portfolios", empty)
    names = FF5_NEWS_FACTORS if with_news else FF5_FACTORS
    columns = {n: np.array(rows_out[n], dtype=float) for n in names + ("rf",)}
    comp_names = ["smb_bp", "smb_op", "smb_inv"] + (["smb_news"] if with_news else [])
    components = {n: np.array(rows_out[n], dtype=float) for n in comp_names}
    return FactorReturnsSeries(out_dates, columns, components)


def factor_returns_ff5(panel: Sequence[PanelRow], groups: Mapping[date, Mapping[str, GroupAssignment]],
                       weighting: str = "equal", risk_free: Mapping[date, float] | None = None
                       ) -> FactorReturnsSeries:
    return _factor_returns(panel, groups, weighting, risk_free, with_news=False)


def factor_returns_ff5news(panel: Sequence[PanelRow], groups: Mapping[date, Mapping[str, GroupAssignment]],
                           weighting: str = "equal", risk_free: Mapping[date, float] | None = None
                           ) -> FactorReturnsSeries:
    for day, g in groups.items():
        if any(ga.news is None for ga in g.values()):
            raise ValidationError(f"news groups missing on {day}")
    return _factor_returns(panel, groups, weighting, risk_free, with_news=True)


def sort_panel(panel: Sequence[PanelRow], news_labels: Mapping[date, Mapping[str, Label | None]] | None = None,
               breakpoints: Breakpoints = Breakpoints()) -> dict[date, dict[str, GroupAssignment]]:
    """Run :func:`sort_groups` on every date with at least six stocks carrying factors."""
    out = {}
    for day, rows in cross_sections(panel).items():
        section = [r.factors for r in rows if r.factors is not None]
        if len(section) < 6:
            continue
        labels = None if news_labels is None else news_labels.get(day, {})
        out[day] = sort_groups(section, labels, breakpoints)
    return out


# ---------------------------------------------------------------------------
# Regressions


@dataclass
class RegressionResult:
    alpha: float
    loadings: dict[str, float]
    residuals: np.ndarray
    r_squared: float
    nobs: int
    symbol: str | None = None

    @property
    def factor_names(self) -> tuple[str, ...]:
        return tuple(self.loadings)

    def loading(self, name: str) -> float | None:
        return self.loadings.get(name)


def _collinear_columns(x: np.ndarray, names: Sequence[str]) -> list[str]:
    bad, kept = [], []
    for j in range(x.shape[1]):
        trial = x[:, kept + [j]]
        if np.linalg.matrix_rank(trial) < len(kept) + 1:
            bad.append(names[j])
        else:
            kept.append(j)
    return bad


def ols_regress(excess_returns, factors: FactorReturnsSeries | np.ndarray,
                names: Sequence[str] | None = None, symbol: str | None = None) -> RegressionResult:
    """Time-series OLS of excess returns on an intercept plus factor returns."""
    y = np.asarray(excess_returns, dtype=np.float64)
    if isinstance(factors, FactorReturnsSeries):
        names = list(factors.factor_names if names is None else names)
        f = factors.matrix(names)
    else:
        f = np.asarray(factors, dtype=np.float64)
        f = f[:, None] if f.ndim == 1 else f
        names = list(names) if names is not None else [f"f{j}" for j in range(f.shape[1])]
    t, k = f.shape
    if y.shape != (t,):
        raise ValidationError(f"{t} factor dates but {y.shape} returns")
    if t <= k + 1:
        raise ValidationError(f"need more than {k + 1} observations, got {t}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
        raise ValidationError("non-finite values in regression inputs")
    x = np.column_stack([np.ones(t), f])
    if np.linalg.matrix_rank(x) < k + 1:
        bad = _collinear_columns(x, ["intercept"] + names)
        raise RankDeficientError(f"rank-deficient design; collinear columns: {', '.join(bad)}", bad)
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0
    return RegressionResult(
        alpha=float(coef[0]),
        loadings={n: float(c) for n, c in zip(names, coef[1:])},
        residuals=resid,
        r_squared=r2,
        nobs=t,
        symbol=symbol,
    )


@dataclass(frozen=True)
class GrsResult:
    statistic: float
    p_value: float
    mean_abs_alpha: float
    T: int
    N: int
    K: int

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "mean_abs_alpha": self.mean_abs_alpha, "T": self.T, "N": self.N, "K": self.K}


def f_survival(x: float, d1: float, d2: float) -> float:
    """P(F > x) for an F(d1, d2) variable, via the regularised incomplete beta."""
    if x <= 0:
        return 1.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x)))


def grs_test(results: Sequence[RegressionResult], factors: FactorReturnsSeries | np.ndarray,
             names: Sequence[str] | None = None) -> GrsResult:
    """Gibbons-Ross-Shanken test that all intercepts are jointly zero.

    Residual and factor covariances use divisor T. The p-value is the upper
    tail of F(N, T - N - K).
    """
    if not results:
        raise ValidationError("no regression results")
    if isinstance(factors, FactorReturnsSeries):
        names = list(results[0].factor_names if names is None else names)
        f = factors.matrix(names)
    else:
        f = np.asarray(factors, dtype=np.float64)
        f = f[:, None] if f.ndim == 1 else f
    t, k = f.shape
    n = len(results)
    if any(r.nobs != t for r in results):
        raise ValidationError("assets do not share the factor sample")
    if t <= n + k:
        raise ValidationError(f"GRS needs T > N + K (T={t}, N={n}, K={k})")
    alpha = np.array([r.alpha for r in results])
    resid = np.column_stack([r.residuals for r in results])
    sigma = resid.T @ resid / t
    if np.linalg.matrix_rank(sigma) < n:
        raise RankDeficientError("residual covariance is singular; use fewer assets or more dates")
    mu = f.mean(axis=0)
    fc = f - mu
    omega = fc.T @ fc / t
    quad_alpha = float(alpha @ np.linalg.solve(sigma, alpha))
    quad_mu = float(mu @ np.linalg.solve(omega, mu))
    stat = (t - n - k) / n * quad_alpha / (1.0 + quad_mu)
    stat = max(stat, 0.0)
    return GrsResult(stat, f_survival(stat, n, t - n - k), float(np.mean(np.abs(alpha))), t, n, k)


def write_regression_report(results: Sequence[RegressionResult], path,
                            header_comment: str | None = None) -> None:
    names = list(results[0].factor_names) if results else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["symbol", "alpha"] + names + ["r_squared", "nobs"])
        for r in results:
            w.writerow([r.symbol, repr(r.alpha)] + [repr(r.loadings[n]) for n in names]
                       + [repr(r.r_squared), r.nobs])
