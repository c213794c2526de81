"""Seeded synthetic market with a planted news effect.

Returns load on a market factor, four characteristic-driven style factors,
an EGARCH idiosyncratic shock and a news term. A stock with news on date t
gets ``intensity_t * sentiment`` added to that day's close-to-close return;
the intensity is common to all stocks and varies over time, so the news
long-short portfolio carries a priced, time-varying premium. Each stock has
its own mix of good and bad news.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .news_encoding import fallback_hash_encoder, save_embeddings
from .risk import EgarchParams, simulate_egarch

POSITIVE_WORDS = ("surges", "beats", "record", "profit", "upgrade", "expands", "wins", "growth",
                  "soars", "raises", "approval", "dividend")
NEGATIVE_WORDS = ("plunges", "misses", "loss", "downgrade", "lawsuit", "cuts", "probe", "slumps",
                  "default", "warning", "recall", "fine")
NEUTRAL_WORDS = ("announces", "meeting", "schedule", "updates", "files", "holds", "reports",
                 "comments", "board", "shareholders", "quarterly", "statement")


@dataclass
class FixtureSpec:
    n_symbols: int = 20
    start: str = "2018-07-02"
    end: str = "2020-12-31"
    seed: int = 0
    news_prob: float = 0.35
    news_effect: float = 0.02
    news_intensity_vol: float = 0.6
    idio_vol: float = 0.015
    market_mean: float = 3e-4
    market_vol: float = 0.012
    style_vol: float = 0.004
    annual_rf: float = 0.02
    d: int = 32
    d_e: int = 8


def business_days(start: date, end: date) -> list[date]:
    out, day = [], start
    while day <= end:
        if day.weekday() < 5:
            out.append(day)
        day += timedelta(days=1)
    return out


def _zscore(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / x.std()


def _headline(rng: np.random.Generator, company: str, sentiment: int) -> str:
    words = list(rng.choice(NEUTRAL_WORDS, size=2, replace=False))
    if sentiment > 0:
        words += list(rng.choice(POSITIVE_WORDS, size=2, replace=False))
    elif sentiment < 0:
        words += list(rng.choice(NEGATIVE_WORDS, size=2, replace=False))
    else:
        words += list(rng.choice(NEUTRAL_WORDS, size=2, replace=False))
    rng.shuffle(words)
    return f"{company} " + " ".join(words)


def generate(spec: FixtureSpec) -> dict:
    """Simulate the market in memory; see :func:`write_fixture` for files."""
    rng = np.random.default_rng(spec.seed)
    dates = business_days(date.fromisoformat(spec.start), date.fromisoformat(spec.end))
    n, t_len = spec.n_symbols, len(dates)
    symbols = [f"SYM{i:03d}" for i in range(n)]

    log_cap = rng.normal(np.log(5e9), 1.0, n)
    bp0 = rng.uniform(0.2, 1.5, n)
    op0 = rng.normal(0.10, 0.08, n)
    inv0 = rng.normal(0.08, 0.10, n)
    beta = rng.uniform(0.7, 1.3, n)
    load = np.column_stack([-0.5 * _zscore(log_cap), 0.5 * _zscore(bp0), 0.5 * _zscore(op0),
                            -0.5 * _zscore(inv0)])

    market = rng.normal(spec.market_mean, spec.market_vol, t_len)
    styles = rng.normal(0.0, spec.style_vol, (t_len, 4))
    intensity = spec.news_effect * np.exp(spec.news_intensity_vol * rng.standard_normal(t_len)
                                          - 0.5 * spec.news_intensity_vol ** 2)

    p_pos = rng.uniform(0.15, 0.55, n)
    p_neg = 0.7 - p_pos
    has_news = rng.random((t_len, n)) < spec.news_prob
    u = rng.random((t_len, n))
    sentiment = np.where(u < p_pos, 1, np.where(u < p_pos + p_neg, -1, 0)) * has_news

    ln_target = np.log(spec.idio_vol ** 2)
    vol_params = EgarchParams(omega=(1 - 0.95) * ln_target - 0.05, alpha=(0.1,), beta=(0.95,),
                              gamma=(0.05,))
    idio = np.column_stack([simulate_egarch(vol_params, t_len, rng) for _ in range(n)])

    ret = (beta * market[:, None] + styles @ load.T + intensity[:, None] * sentiment + idio)
    ret = np.clip(ret, -0.45, 0.45)
    ret[0] = 0.0

    close = 10.0 * np.exp(rng.normal(0, 0.5, n)) * np.cumprod(1.0 + ret, axis=0)
    overnight = rng.normal(0.0, 0.002, (t_len, n))
    prev_close = np.vstack([close[0] / (1.0 + ret[0]), close[:-1]])
    open_ = prev_close * (1.0 + overnight)
    wick = np.abs(rng.normal(0.0, 0.004, (t_len, 2, n)))
    high = np.maximum(open_, close) * (1.0 + wick[:, 0])
    low = np.minimum(open_, close) * (1.0 - wick[:, 1])
    volume = rng.integers(100_000, 5_000_000, (t_len, n))

    shares = np.exp(log_cap) / close[0]
    bp = bp0 * np.exp(np.cumsum(rng.normal(0, 0.002, (t_len, n)), axis=0))
    op = op0 + np.cumsum(rng.normal(0, 0.0005, (t_len, n)), axis=0)
    inv = inv0 + np.cumsum(rng.normal(0, 0.0005, (t_len, n)), axis=0)

    headlines = {}
    for ti, ci in zip(*np.nonzero(has_news)):
        headlines[(symbols[ci], dates[ti])] = _headline(rng, f"Company {symbols[ci]}",
                                                        int(sentiment[ti, ci]))
    return {
        "spec": spec, "dates": dates, "symbols": symbols, "open": open_, "high": high, "low": low,
        "close": close, "volume": volume, "mktcap": shares * close, "bp": bp, "op": op, "inv": inv,
        "headlines": headlines, "sentiment": sentiment, "intensity": intensity,
        "rf": spec.annual_rf / 252.0,
    }


def default_config(spec: FixtureSpec) -> dict:
    return {
        "data": {"prices": "prices.csv", "factors": "factors.csv", "news": "news.jsonl",
                 "embeddings": "embeddings.jsonl", "risk_free": "risk_free.csv"},
        "output_dir": "runs",
        "splits": {"train_end": "2020-07-01", "validation_end": "2020-10-01", "test_end": "2020-12-31"},
        "encoding": {"d": spec.d, "d_e": spec.d_e, "seed": spec.seed},
        "classifier": {"learning_rate": 1e-3, "batch_size": 32, "epochs": 15, "rng_seed": spec.seed,
                       "hidden": 1024, "dropout_rate": 0.1, "momentum": 0.9},
        "factor_model": {"weighting": "equal", "window": "all"},
        "risk": {"p": 1, "q": 1, "confidence": 0.95, "window": 60, "variant": "squared", "n_starts": 20},
        "backtest": {"cost": 0.001, "random_replications": 20},
        "rng_seed": spec.seed,
    }


def write_fixture(out_dir, spec: FixtureSpec | None = None) -> Path:
    """Write prices, factors, news, embeddings, risk-free rate and a config file."""
    spec = spec or FixtureSpec()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = generate(spec)
    dates, symbols = sim["dates"], sim["symbols"]

    with open(out / "prices.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["symbol", "date", "open", "high", "low", "close", "volume"])
        for ci, sym in enumerate(symbols):
            for ti, day in enumerate(dates):
                w.writerow([sym, day.isoformat(), repr(float(sim["open"][ti, ci])),
                            repr(float(sim["high"][ti, ci])), repr(float(sim["low"][ti, ci])),
                            repr(float(sim["close"][ti, ci])), int(sim["volume"][ti, ci])])

    with open(out / "factors.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["symbol", "date", "mktcap", "bp", "op", "inv"])
        for ci, sym in enumerate(symbols):
            for ti, day in enumerate(dates):
                w.writerow([sym, day.isoformat()] + [repr(float(sim[k][ti, ci]))
                                                     for k in ("mktcap", "bp", "op", "inv")])

    store = {}
    with open(out / "news.jsonl", "w", encoding="utf-8") as fh:
        for (sym, day), text in sorted(sim["headlines"].items()):
            key = f"{sym}-{day.isoformat()}"
            store[key] = fallback_hash_encoder(text, spec.d, spec.d_e, spec.seed)
            fh.write(json.dumps({"symbol": sym, "date": day.isoformat(), "headline": text,
                                 "embedding_id": key}) + "\n")
    save_embeddings(store, out / "embeddings.jsonl")

    with open(out / "risk_free.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "rf"])
        for day in dates:
            w.writerow([day.isoformat(), repr(sim["rf"])])

    (out / "config.json").write_text(json.dumps(default_config(spec), indent=2) + "\n", encoding="utf-8")
    return out
