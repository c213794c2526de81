"""Open-to-open long-only backtest of daily classifier picks."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .market_data import PanelRow

logger = logging.getLogger(__name__)

TRADING_DAYS = 252


@dataclass(frozen=True)
class TradePlan:
    date: date
    symbols: frozenset[str]

    def __init__(self, date, symbols: Iterable[str] = ()):
        object.__setattr__(self, "date", date)
        object.__setattr__(self, "symbols", frozenset(symbols))

    @property
    def weight(self) -> float:
        return 1.0 / len(self.symbols) if self.symbols else 0.0


@dataclass(frozen=True)
class Trade:
    date: date
    symbol: str
    buy_open: float
    sell_open: float
    net_return: float


@dataclass
class EquityCurve:
    dates: list[date]
    daily_return: np.ndarray
    equity: np.ndarray
    initial: float = 1.0

    def __post_init__(self):
        if len(self.dates) != self.daily_return.shape[0] or self.equity.shape != self.daily_return.shape:
            raise ValidationError("curve arrays must align with dates")

    def path(self) -> np.ndarray:
        """Equity including the starting value."""
        return np.concatenate([[self.initial], self.equity])

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["date", "equity", "daily_return"])
            for d, e, r in zip(self.dates, self.equity, self.daily_return):
                w.writerow([d.isoformat(), repr(float(e)), repr(float(r))])


@dataclass
class BacktestResult:
    curve: EquityCurve
    ledger: list[Trade] = field(default_factory=list)
    skipped: list[tuple[date, str]] = field(default_factory=list)


def net_trade_return(buy_open: float, sell_open: float, cost: float) -> float:
    """Round trip paying ``cost`` on the buy leg and on the sell leg."""
    return (sell_open * (1.0 - cost)) / (buy_open * (1.0 + cost)) - 1.0


def equity_from_returns(daily_returns, initial: float = 1.0) -> np.ndarray:
    equity = np.empty(len(daily_returns))
    level = initial
    for i, r in enumerate(daily_returns):
        level = level * (1.0 + r)
        equity[i] = level
    return equity


def run_backtest(panel: Sequence[PanelRow], plans: Sequence[TradePlan], cost: float = 0.001,
                 initial: float = 1.0) -> BacktestResult:
    """Buy each plan's symbols at that day's open, sell at the next day's open.

    Positions are equal-weighted; a symbol without both opens is skipped and
    its weight spread over the others. Days with no position earn zero.
    """
    if not 0.0 <= cost < 1.0:
        raise ValidationError("cost must lie in [0, 1)")
    opens = {(r.symbol, r.date): (r.open, r.open_next) for r in panel}
    plans = sorted(plans, key=lambda p: p.date)
    if any(b.date == a.date for a, b in zip(plans, plans[1:])):
        raise ValidationError("more than one plan for a date")
    ledger, skipped, rets = [], [], []
    for plan in plans:
        trades = []
        for sym in sorted(plan.symbols):
            buy, sell = opens.get((sym, plan.date), (None, None))
            if buy is None or sell is None:
                skipped.append((plan.date, sym))
                logger.info("skipping %s on %s: missing open or next open", sym, plan.date)
                continue
            trades.append(Trade(plan.date, sym, buy, sell, net_trade_return(buy, sell, cost)))
        ledger.extend(trades)
        rets.append(sum(t.net_return for t in trades) / len(trades) if trades else 0.0)
    daily = np.array(rets, dtype=np.float64)
    curve = EquityCurve([p.date for p in plans], daily, equity_from_returns(daily, initial), initial)
    if np.any(curve.equity <= 0):
        raise ValidationError("equity fell to zero or below")
    return BacktestResult(curve, ledger, skipped)


def curve_from_ledger(ledger: Sequence[Trade], dates: Sequence[date], initial: float = 1.0) -> EquityCurve:
    """Rebuild the equity curve from trades alone; empty dates are cash days."""
    by_date: dict[date, list[float]] = {}
    for t in ledger:
        by_date.setdefault(t.date, []).append(t.net_return)
    daily = np.array([sum(by_date[d]) / len(by_date[d]) if d in by_date else 0.0 for d in dates])
    return EquityCurve(list(dates), daily, equity_from_returns(daily, initial), initial)


def _equity_path(curve) -> np.ndarray:
    if isinstance(curve, EquityCurve):
        return curve.path()
    return np.asarray(curve, dtype=np.float64)


def max_drawdown(curve: EquityCurve | Sequence[float]) -> float:
    """Largest peak-to-trough decline as a fraction <= 0.

    A plain sequence is read as equity levels; an :class:`EquityCurve`
    includes its starting equity as the first peak.
    """
    path = _equity_path(curve)
    if path.size == 0:
        raise ValidationError("empty equity curve")
    peaks = np.maximum.accumulate(path)
    return float(min(0.0, np.min(path / peaks - 1.0)))


def annualized_return(curve: EquityCurve | Sequence[float], trading_days: int = TRADING_DAYS) -> float:
    path = _equity_path(curve)
    if path.size < 2:
        raise ValidationError("need at least two equity points")
    n_returns = path.size - 1
    return float((path[-1] / path[0]) ** (trading_days / n_returns) - 1.0)


def sharpe_ratio(curve: EquityCurve | Sequence[float], risk_free_daily: float = 0.0,
                 trading_days: int = TRADING_DAYS, returns: Sequence[float] | None = None) -> float:
    """Annualised mean over sample standard deviation of daily excess returns.

    Pass ``returns`` directly to skip deriving them from equity levels.
    """
    if returns is None:
        if isinstance(curve, EquityCurve):
            returns = curve.daily_return
        else:
            path = _equity_path(curve)
            returns = path[1:] / path[:-1] - 1.0
    excess = np.asarray(returns, dtype=np.float64) - risk_free_daily
    if excess.size < 2:
        raise ValidationError("need at least two daily returns")
    sd = float(np.std(excess, ddof=1))
    if sd <= 1e-14 * max(1.0, float(np.max(np.abs(excess)))):
        raise ValidationError("undefined Sharpe: returns have zero variance")
    return float(np.mean(excess) / sd * math.sqrt(trading_days))


@dataclass(frozen=True)
class BacktestMetrics:
    annualized_return: float
    max_drawdown: float
    sharpe_ratio: float | None

    def to_dict(self) -> dict:
        return {"annualized_return": self.annualized_return, "max_drawdown": self.max_drawdown,
                "sharpe_ratio": self.sharpe_ratio}


def backtest_metrics(curve: EquityCurve, risk_free_daily: float = 0.0) -> BacktestMetrics:
    try:
        sharpe = sharpe_ratio(curve, risk_free_daily)
    except ValidationError:
        sharpe = None
    return BacktestMetrics(annualized_return(curve), max_drawdown(curve), sharpe)


def write_ledger(ledger: Sequence[Trade], path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["date", "symbol", "buy_open", "sell_open", "net_return"])
        for t in ledger:
            w.writerow([t.date.isoformat(), t.symbol, repr(t.buy_open), repr(t.sell_open),
                        repr(t.net_return)])


def random_plans(plans: Sequence[TradePlan], universe: dict[date, Sequence[str]],
                 rng: np.random.Generator) -> list[TradePlan]:
    """Same number of names per day as ``plans``, drawn uniformly from that day's universe."""
    out = []
    for plan in plans:
        pool = sorted(universe.get(plan.date, ()))
        k = min(len(plan.symbols), len(pool))
        picks = rng.choice(len(pool), size=k, replace=False) if k else []
        out.append(TradePlan(plan.date, [pool[i] for i in picks]))
    return out
