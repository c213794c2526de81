"""Price, factor and news ingestion aligned on an observed-date trading calendar."""

from __future__ import annotations

import bisect
import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .news_encoding import NewsFeatureVector, pool_features

logger = logging.getLogger(__name__)

PRICE_HEADER = ["symbol", "date", "open", "high", "low", "close", "volume"]
FACTOR_HEADER = ["symbol", "date", "mktcap", "bp", "op", "inv"]
RISK_FREE_HEADER = ["date", "rf"]


@dataclass(frozen=True)
class PriceBar:
    symbol: str
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        for name in ("open", "high", "low", "close"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{self.symbol} {self.date}: {name} must be > 0, got {value}")
        if self.high < self.low:
            raise ValidationError(f"{self.symbol} {self.date}: high < low")
        if self.low > min(self.open, self.close):
            raise ValidationError(f"{self.symbol} {self.date}: low > min(open, close)")
        if self.high < max(self.open, self.close):
            raise ValidationError(f"{self.symbol} {self.date}: high < max(open, close)")
        if not (math.isfinite(self.volume) and self.volume >= 0):
            raise ValidationError(f"{self.symbol} {self.date}: volume must be >= 0")


@dataclass(frozen=True)
class StockFactorRow:
    symbol: str
    date: date
    mktcap: float
    bp: float
    op: float
    inv: float
    extra: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.mktcap) and self.mktcap > 0):
            raise ValidationError(f"{self.symbol} {self.date}: mktcap must be > 0")
        for name in ("bp", "op", "inv"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{self.symbol} {self.date}: {name} is not finite")

    @property
    def names(self) -> list[str]:
        return FACTOR_HEADER[2:] + [k for k, _ in self.extra]

    def values(self) -> np.ndarray:
        return np.array([self.mktcap, self.bp, self.op, self.inv] + [v for _, v in self.extra])


@dataclass(frozen=True)
class NewsRecord:
    symbol: str
    date: date
    headline: str | None = None
    embedding_id: str | None = None


@dataclass
class PanelRow:
    symbol: str
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: float
    return_1d: float | None = None
    open_next: float | None = None
    factors: StockFactorRow | None = None
    news: NewsFeatureVector | None = None
    headline: str | None = None

    def to_dict(self) -> dict:
        out = {
            "symbol": self.symbol,
            "date": self.date.isoformat(),
            "open": self.open,
            "high": self.high,
            "low": self.low,
            "close": self.close,
            "volume": self.volume,
            "return_1d": self.return_1d,
            "open_next": self.open_next,
            "factors": None,
            "news": None if self.news is None else self.news.to_dict(),
            "headline": self.headline,
        }
        if self.factors is not None:
            f = self.factors
            out["factors"] = {"mktcap": f.mktcap, "bp": f.bp, "op": f.op, "inv": f.inv,
                              "extra": [list(kv) for kv in f.extra]}
        return out

    @classmethod
    def from_dict(cls, obj: Mapping) -> "PanelRow":
        day = date.fromisoformat(obj["date"])
        factors = None
        if obj.get("factors") is not None:
            f = obj["factors"]
            factors = StockFactorRow(obj["symbol"], day, f["mktcap"], f["bp"], f["op"], f["inv"],
                                     tuple((k, v) for k, v in f.get("extra", [])))
        news = None if obj.get("news") is None else NewsFeatureVector.from_dict(obj["news"])
        return cls(
            symbol=obj["symbol"], date=day, open=obj["open"], high=obj["high"], low=obj["low"],
            close=obj["close"], volume=obj["volume"], return_1d=obj.get("return_1d"),
            open_next=obj.get("open_next"), factors=factors, news=news, headline=obj.get("headline"),
        )

    def __eq__(self, other):
        if not isinstance(other, PanelRow):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _parse_date(text: str, line: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ParseError(f"bad date {text!r}", line=line) from exc


def _parse_float(text: str, name: str, line: int) -> float:
    try:
        return float(text)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad {name} value {text!r}", line=line) from exc


def _read_csv(path, expected: list[str], allow_extra: bool = False):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise ParseError("missing header row", line=1)
    header = [h.strip() for h in header]
    ok = header[: len(expected)] == expected and (allow_extra or len(header) == len(expected))
    if not ok:
        fh.close()
        raise ParseError(f"header {header} does not match {expected}", line=1)
    return fh, reader, header


def load_prices(path) -> list[PriceBar]:
    fh, reader, header = _read_csv(path, PRICE_HEADER)
    bars: list[PriceBar] = []
    seen: set[tuple[str, date]] = set()
    with fh:
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            symbol = row[0].strip()
            day = _parse_date(row[1], line)
            nums = [_parse_float(v, n, line) for v, n in zip(row[2:], header[2:])]
            try:
                bar = PriceBar(symbol, day, *nums)
            except ValidationError as exc:
                raise ValidationError(f"line {line}: {exc}") from exc
            if (symbol, day) in seen:
                raise ValidationError(f"line {line}: duplicate bar for {symbol} {day}")
            seen.add((symbol, day))
            bars.append(bar)
    bars.sort(key=lambda b: (b.symbol, b.date))
    return bars


def load_factors(path) -> list[StockFactorRow]:
    fh, reader, header = _read_csv(path, FACTOR_HEADER, allow_extra=True)
    extra_names = header[len(FACTOR_HEADER):]
    rows: list[StockFactorRow] = []
    with fh:
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            day = _parse_date(row[1], line)
            nums = [_parse_float(v, n, line) for v, n in zip(row[2:], header[2:])]
            try:
                rows.append(StockFactorRow(row[0].strip(), day, *nums[:4],
                                           extra=tuple(zip(extra_names, nums[4:]))))
            except ValidationError as exc:
                raise ValidationError(f"line {line}: {exc}") from exc
    rows.sort(key=lambda r: (r.symbol, r.date))
    return rows


def load_news(path) -> list[NewsRecord]:
    records: list[NewsRecord] = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(NewsRecord(
                    symbol=str(obj["symbol"]),
                    date=date.fromisoformat(obj["date"]),
                    headline=obj.get("headline") or None,
                    embedding_id=obj.get("embedding_id"),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad news record: {exc}", line=lineno) from exc
    return records


def load_risk_free(path) -> dict[date, float]:
    fh, reader, _ = _read_csv(path, RISK_FREE_HEADER)
    out: dict[date, float] = {}
    with fh:
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            out[_parse_date(row[0], line)] = _parse_float(row[1], "rf", line)
    return out


def trading_calendar(bars: Iterable[PriceBar]) -> list[date]:
    """Sorted union of all dates that carry at least one price bar."""
    return sorted({b.date for b in bars})


def _by_symbol(bars: Iterable[PriceBar]) -> dict[str, list[PriceBar]]:
    groups: dict[str, list[PriceBar]] = defaultdict(list)
    for bar in bars:
        groups[bar.symbol].append(bar)
    for seq in groups.values():
        seq.sort(key=lambda b: b.date)
    return dict(groups)


def compute_returns(bars: Sequence[PriceBar], kind: str = "close") -> dict[tuple[str, date], float]:
    """Simple one-period returns keyed by (symbol, date).

    ``kind="close"`` gives close_t / close_{t-1} - 1 against the symbol's
    previous bar; ``kind="open"`` uses opens instead. The first bar of each
    symbol has no return.
    """
    if kind not in ("close", "open"):
        raise ValueError(f"unknown return kind {kind!r}")
    out: dict[tuple[str, date], float] = {}
    for symbol, seq in sorted(_by_symbol(bars).items()):
        if len(seq) < 2:
            logger.warning("symbol %s has a single bar; no returns computed", symbol)
            continue
        for prev, cur in zip(seq, seq[1:]):
            out[(symbol, cur.date)] = getattr(cur, kind) / getattr(prev, kind) - 1.0
    return out


@dataclass
class AlignStats:
    rows: int = 0
    with_news: int = 0
    dropped_factor_rows: int = 0
    dropped_news: int = 0
    missing_factors: int = 0
    by_symbol: dict[str, int] = field(default_factory=dict)


def align_panel(
    prices: Sequence[PriceBar],
    factors: Sequence[StockFactorRow] = (),
    news: Sequence[NewsRecord] = (),
    calendar: Sequence[date] | None = None,
    resolve_news: Callable[[NewsRecord], NewsFeatureVector | None] | None = None,
    stats: AlignStats | None = None,
) -> list[PanelRow]:
    """Join prices, factors and news into one row per (symbol, date) with a price.

    News dated off the calendar rolls forward to the next trading date; news
    after the last date is dropped. ``resolve_news`` maps a record to its
    feature vector; several records on one row are mean-pooled.
    """
    calendar = list(calendar) if calendar is not None else trading_calendar(prices)
    cal_index = {d: i for i, d in enumerate(calendar)}
    stats = stats if stats is not None else AlignStats()

    grouped = _by_symbol(prices)
    for bar in prices:
        if bar.date not in cal_index:
            raise ValidationError(f"price date {bar.date} for {bar.symbol} is not on the calendar")

    factor_map = {(f.symbol, f.date): f for f in factors}
    price_keys = {(b.symbol, b.date) for b in prices}
    dropped = sorted(set(factor_map) - price_keys)
    stats.dropped_factor_rows = len(dropped)
    if dropped:
        logger.warning("dropped %d factor rows with no matching price", len(dropped))

    news_map: dict[tuple[str, date], list[NewsRecord]] = defaultdict(list)
    for rec in news:
        pos = bisect.bisect_left(calendar, rec.date)
        if pos == len(calendar):
            stats.dropped_news += 1
            continue
        key = (rec.symbol, calendar[pos])
        if key not in price_keys:
            stats.dropped_news += 1
            continue
        news_map[key].append(rec)
    if stats.dropped_news:
        logger.warning("dropped %d news records with no matching price bar", stats.dropped_news)

    rows: list[PanelRow] = []
    for symbol in sorted(grouped):
        seq = grouped[symbol]
        by_date = {b.date: b for b in seq}
        stats.by_symbol[symbol] = len(seq)
        for i, bar in enumerate(seq):
            ret = bar.close / seq[i - 1].close - 1.0 if i > 0 else None
            nxt_pos = cal_index[bar.date] + 1
            nxt = by_date.get(calendar[nxt_pos]) if nxt_pos < len(calendar) else None
            key = (symbol, bar.date)
            fac = factor_map.get(key)
            if fac is None:
                stats.missing_factors += 1
            feature, headline = None, None
            recs = news_map.get(key)
            if recs:
                texts = [r.headline for r in recs if r.headline]
                headline = " | ".join(texts) if texts else None
                if resolve_news is not None:
                    vecs = [v for v in (resolve_news(r) for r in recs) if v is not None]
                    if vecs:
                        feature = vecs[0] if len(vecs) == 1 else pool_features(vecs)
                stats.with_news += 1
            rows.append(PanelRow(
                symbol=symbol, date=bar.date, open=bar.open, high=bar.high, low=bar.low,
                close=bar.close, volume=bar.volume, return_1d=ret,
                open_next=None if nxt is None else nxt.open,
                factors=fac, news=feature, headline=headline,
            ))
    stats.rows = len(rows)
    return rows


def save_panel(rows: Sequence[PanelRow], path, meta: Mapping | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": dict(meta)}, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row.to_dict(), sort_keys=True) + "\n")


def load_panel_with_meta(path) -> tuple[list[PanelRow], dict]:
    rows: list[PanelRow] = []
    meta: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if "_meta" in obj:
                    meta = obj["_meta"]
                    continue
                rows.append(PanelRow.from_dict(obj))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad panel row: {exc}", line=lineno) from exc
    return rows, meta


def load_panel(path) -> list[PanelRow]:
    return load_panel_with_meta(path)[0]


def panel_dates(rows: Iterable[PanelRow]) -> list[date]:
    return sorted({r.date for r in rows})
