"""Pipeline stages. Each reads its inputs from the run directory and writes its own artifacts.

Every artifact carries the config hash (a ``# config_hash=...`` first line
for CSV, a ``config_hash`` field for JSON, an HTML comment for Markdown);
stages refuse inputs stamped with a different hash.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from collections import defaultdict
from datetime import date
from pathlib import Path
from typing import Callable

import numpy as np

from . import backtest as bt
from .classifier import (Label, assign_labels, evaluate, load_checkpoint, predict,
                         save_checkpoint, train)
from .config import RunConfig, save_config
from .errors import ConfigMismatchError, FinReportError, NumericalError, ValidationError
from .factor_model import (FactorReturnsSeries, RegressionResult,
                           factor_returns_ff5, factor_returns_ff5news, grs_test, ols_regress,
                           sort_panel, write_regression_report)
from .market_data import (AlignStats, NewsRecord, PanelRow, align_panel, load_factors, load_news,
                          load_panel_with_meta, load_prices, load_risk_free, save_panel)
from .news_encoding import NewsFeatureVector, fallback_hash_encoder, load_embeddings
from .report import decompose, relay_llm, render_report
from .risk import (VarEstimate, aggregate_var_metrics, compute_var, egarch_filter, evaluate_var,
                   fit_egarch, normal_quantile)

logger = logging.getLogger(__name__)

STAGES = ("ingest", "train", "predict", "factors", "regress", "grs", "risk", "backtest", "report")


class StageError(FinReportError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class MissingArtifactError(FinReportError):
    pass


# ---------------------------------------------------------------------------
# artifact helpers


def _stamp(cfg: RunConfig) -> str:
    return f"config_hash={cfg.config_hash()}"


def _check_csv_stamp(cfg: RunConfig, path: Path) -> None:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first != f"# {_stamp(cfg)}":
        raise ConfigMismatchError(f"{path.name} was produced under a different config ({first!r})")


def _check_json_stamp(cfg: RunConfig, doc: dict, path: Path) -> None:
    if doc.get("config_hash") != cfg.config_hash():
        raise ConfigMismatchError(f"{path.name} was produced under a different config")


def _require(run_dir: Path, name: str, stage: str) -> Path:
    path = run_dir / name
    if not path.exists():
        raise MissingArtifactError(f"{name} not found in {run_dir}; run the '{stage}' stage first")
    return path


def _write_json(path: Path, cfg: RunConfig, payload: dict) -> None:
    doc = {"config_hash": cfg.config_hash(), **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_json(cfg: RunConfig, path: Path) -> dict:
    doc = json.loads(path.read_text(encoding="utf-8"))
    _check_json_stamp(cfg, doc, path)
    return doc


def _read_stamped_csv(cfg: RunConfig, path: Path) -> list[dict]:
    _check_csv_stamp(cfg, path)
    with open(path, newline="", encoding="utf-8") as fh:
        fh.readline()
        return list(csv.DictReader(fh))


def prepare_run_dir(cfg: RunConfig) -> Path:
    run_dir = cfg.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg_path = run_dir / "config.json"
    save_config(cfg, cfg_path)
    return run_dir


_PANEL_CACHE: dict[str, tuple[tuple, list[PanelRow], dict]] = {}


def load_run_panel(cfg: RunConfig, run_dir: Path) -> list[PanelRow]:
    """Read panel.jsonl, reusing the parsed rows while the file is unchanged.

    Callers must not mutate the returned rows.
    """
    path = _require(run_dir, "panel.jsonl", "ingest")
    st = path.stat()
    sig = (st.st_mtime_ns, st.st_size, st.st_ino)
    key = str(path.resolve())
    cached = _PANEL_CACHE.get(key)
    if cached is not None and cached[0] == sig:
        rows, meta = cached[1], cached[2]
    else:
        rows, meta = load_panel_with_meta(path)
        _PANEL_CACHE.clear()
        _PANEL_CACHE[key] = (sig, rows, meta)
    if meta.get("config_hash") != cfg.config_hash():
        raise ConfigMismatchError("panel.jsonl was produced under a different config")
    return rows


def _risk_free(cfg: RunConfig) -> dict[date, float]:
    path = cfg.resolve(cfg.data.risk_free)
    return load_risk_free(path) if path is not None else {}


# ---------------------------------------------------------------------------
# features and labels


def feature_matrix(rows: list[PanelRow], d: int, d_e: int) -> dict[tuple[str, date], np.ndarray]:
    """Stacked [news; factors] input per row.

    Factors are log market cap, BP, profitability, investment and any extra
    columns, z-scored across the stocks of each date. Missing news is zero.
    """
    by_date: dict[date, list[PanelRow]] = defaultdict(list)
    for r in rows:
        if r.factors is not None:
            by_date[r.date].append(r)
    zero_news = np.zeros(3 * d + 3 * d_e)
    out = {}
    for day in sorted(by_date):
        section = by_date[day]
        raw = np.array([r.factors.values() for r in section])
        raw[:, 0] = np.log(raw[:, 0])
        sd = raw.std(axis=0)
        z = np.where(sd > 0, (raw - raw.mean(axis=0)) / np.where(sd > 0, sd, 1.0), 0.0)
        for r, zf in zip(section, z):
            news = zero_news if r.news is None else r.news.flatten()
            if news.shape != zero_news.shape:
                raise ValidationError(f"news vector for {r.symbol} {r.date} has wrong length")
            out[(r.symbol, r.date)] = np.concatenate([news, zf])
    return out


def row_returns(rows: list[PanelRow], kind: str) -> dict[tuple[str, date], float]:
    if kind == "close":
        return {(r.symbol, r.date): r.return_1d for r in rows if r.return_1d is not None}
    out, prev = {}, {}
    for r in sorted(rows, key=lambda r: (r.symbol, r.date)):
        if r.symbol in prev:
            out[(r.symbol, r.date)] = r.open / prev[r.symbol] - 1.0
        prev[r.symbol] = r.open
    return out


def date_labels(rows: list[PanelRow], kind: str, min_symbols: int = 5) -> dict[tuple[str, date], Label]:
    rets = row_returns(rows, kind)
    by_date: dict[date, dict[str, float]] = defaultdict(dict)
    for (sym, day), r in rets.items():
        by_date[day][sym] = r
    out = {}
    for day in sorted(by_date):
        for sym, lab in assign_labels(by_date[day], min_symbols).items():
            if lab is not None:
                out[(sym, day)] = lab
    return out


# ---------------------------------------------------------------------------
# stages


def stage_ingest(cfg: RunConfig, run_dir: Path) -> dict:
    prices = load_prices(cfg.resolve(cfg.data.prices))
    factors = load_factors(cfg.resolve(cfg.data.factors))
    news: list[NewsRecord] = []
    if cfg.data.news:
        news = load_news(cfg.resolve(cfg.data.news))
    store: dict[str, NewsFeatureVector] = {}
    if cfg.data.embeddings:
        store = load_embeddings(cfg.resolve(cfg.data.embeddings),
                                required_ids=[n.embedding_id for n in news if n.embedding_id])
    d, d_e, seed = cfg.encoding.d, cfg.encoding.d_e, cfg.encoding.seed
    for key, vec in store.items():
        if (vec.d, vec.d_e) != (d, d_e):
            raise ValidationError(f"embedding {key} has dims ({vec.d}, {vec.d_e}), config says ({d}, {d_e})")

    def resolve(rec: NewsRecord) -> NewsFeatureVector:
        if rec.embedding_id and rec.embedding_id in store:
            return store[rec.embedding_id]
        return fallback_hash_encoder(rec.headline, d, d_e, seed)

    stats = AlignStats()
    rows = align_panel(prices, factors, news, resolve_news=resolve, stats=stats)
    save_panel(rows, run_dir / "panel.jsonl", meta={"config_hash": cfg.config_hash()})
    summary = {"rows": stats.rows, "symbols": len(stats.by_symbol), "rows_with_news": stats.with_news,
               "dropped_factor_rows": stats.dropped_factor_rows, "dropped_news": stats.dropped_news,
               "rows_without_factors": stats.missing_factors}
    _write_json(run_dir / "ingest_summary.json", cfg, summary)
    return summary


def _split_arrays(cfg: RunConfig, rows: list[PanelRow]):
    feats = feature_matrix(rows, cfg.encoding.d, cfg.encoding.d_e)
    labels = date_labels(rows, cfg.labels.return_kind, cfg.labels.min_symbols)
    parts: dict[str, tuple[list, list]] = {"train": ([], []), "validation": ([], []), "test": ([], [])}
    for key in sorted(labels):
        if key not in feats:
            continue
        seg = cfg.splits.segment(key[1])
        if seg is None:
            continue
        parts[seg][0].append(feats[key])
        parts[seg][1].append(int(labels[key]))
    return {k: (np.array(x, dtype=float), np.array(y, dtype=np.int64)) for k, (x, y) in parts.items()}


def stage_train(cfg: RunConfig, run_dir: Path) -> dict:
    rows = load_run_panel(cfg, run_dir)
    data = _split_arrays(cfg, rows)
    xt, yt = data["train"]
    if xt.shape[0] == 0:
        raise ValidationError("no labeled training rows before splits.train_end")
    validation = data["validation"] if data["validation"][0].shape[0] else None
    result = train(xt, yt, cfg.classifier, validation=validation)
    save_checkpoint(result.params, run_dir / "model.json", cfg.classifier,
                    extra={"config_hash": cfg.config_hash()})
    metrics = {"history": result.history, "best_epoch": result.best_epoch,
               "n_train": int(xt.shape[0])}
    for seg in ("train", "validation", "test"):
        x, y = data[seg]
        if x.shape[0]:
            metrics[seg] = evaluate(result.params, x, y)
    _write_json(run_dir / "train_metrics.json", cfg, metrics)
    return metrics


def _load_model(cfg: RunConfig, run_dir: Path):
    path = _require(run_dir, "model.json", "train")
    d = 3 * cfg.encoding.d + 3 * cfg.encoding.d_e
    params, doc = load_checkpoint(path, hidden=cfg.classifier.hidden)
    _check_json_stamp(cfg, doc, path)
    if params.input_dim < d:
        raise ValidationError("checkpoint input is smaller than the news block")
    return params


def stage_predict(cfg: RunConfig, run_dir: Path) -> dict:
    rows = load_run_panel(cfg, run_dir)
    params = _load_model(cfg, run_dir)
    feats = feature_matrix(rows, cfg.encoding.d, cfg.encoding.d_e)
    keys = sorted(feats, key=lambda k: (k[1], k[0]))
    pred, probs = predict(params, np.array([feats[k] for k in keys]))
    with open(run_dir / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {_stamp(cfg)}\n")
        w = csv.writer(fh)
        w.writerow(["symbol", "date", "label", "p_positive", "p_neutral", "p_negative"])
        for (sym, day), lab, p in zip(keys, pred, probs):
            w.writerow([sym, day.isoformat(), Label(int(lab)).short] + [repr(float(v)) for v in p])
    counts = {Label(c).short: int(np.sum(pred == c)) for c in range(3)}
    return {"rows": len(keys), "counts": counts}


def load_predictions(cfg: RunConfig, run_dir: Path) -> dict[tuple[str, date], dict]:
    path = _require(run_dir, "predictions.csv", "predict")
    out = {}
    for rec in _read_stamped_csv(cfg, path):
        out[(rec["symbol"], date.fromisoformat(rec["date"]))] = {
            "label": Label[rec["label"].upper()],
            "probs": [float(rec["p_positive"]), float(rec["p_neutral"]), float(rec["p_negative"])],
        }
    return out


def stage_factors(cfg: RunConfig, run_dir: Path) -> dict:
    rows = load_run_panel(cfg, run_dir)
    preds = load_predictions(cfg, run_dir)
    labels_by_date: dict[date, dict[str, Label]] = defaultdict(dict)
    for (sym, day), rec in preds.items():
        labels_by_date[day][sym] = rec["label"]
    rf = _risk_free(cfg)
    groups = sort_panel(rows, labels_by_date)
    ff5 = factor_returns_ff5(rows, groups, cfg.factor_model.weighting, rf)
    ff5n = factor_returns_ff5news(rows, groups, cfg.factor_model.weighting, rf)
    ff5.to_csv(run_dir / "factors_ff5.csv", _stamp(cfg))
    ff5n.to_csv(run_dir / "factors_ff5news.csv", _stamp(cfg))
    return {"dates": len(ff5.dates)}


def load_factor_series(cfg: RunConfig, run_dir: Path, news: bool) -> FactorReturnsSeries:
    name = "factors_ff5news.csv" if news else "factors_ff5.csv"
    path = _require(run_dir, name, "factors")
    _check_csv_stamp(cfg, path)
    return FactorReturnsSeries.from_csv(path)


def _window_dates(cfg: RunConfig, dates: list[date]) -> list[date]:
    if cfg.factor_model.window == "all":
        return [d for d in dates if cfg.splits.segment(d) is not None]
    return [d for d in dates if cfg.splits.segment(d) == "test"]


def run_regressions(cfg: RunConfig, run_dir: Path, rows: list[PanelRow] | None = None
                    ) -> dict[str, tuple[list[RegressionResult], FactorReturnsSeries]]:
    """FF5 and FF5-News regressions of every stock with a full return history in the window."""
    rows = rows if rows is not None else load_run_panel(cfg, run_dir)
    out = {}
    for model, news in (("ff5", False), ("ff5news", True)):
        series = load_factor_series(cfg, run_dir, news)
        window = _window_dates(cfg, series.dates)
        series = series.subset(window)
        rets: dict[str, dict[date, float]] = defaultdict(dict)
        for r in rows:
            if r.return_1d is not None:
                rets[r.symbol][r.date] = r.return_1d
        rf = series.columns["rf"]
        results = []
        for sym in sorted(rets):
            if not all(d in rets[sym] for d in series.dates):
                continue
            y = np.array([rets[sym][d] for d in series.dates]) - rf
            results.append(ols_regress(y, series, symbol=sym))
        if not results:
            raise ValidationError("no stock has returns on every date of the regression window")
        out[model] = (results, series)
    return out


def stage_regress(cfg: RunConfig, run_dir: Path) -> dict:
    regs = run_regressions(cfg, run_dir)
    summary = {}
    for model, (results, series) in regs.items():
        write_regression_report(results, run_dir / f"regression_{model}.csv", _stamp(cfg))
        summary[model] = {"assets": len(results), "T": len(series.dates),
                          "mean_abs_alpha": float(np.mean([abs(r.alpha) for r in results])),
                          "mean_r_squared": float(np.mean([r.r_squared for r in results]))}
    return summary


def full_rank_assets(results: list[RegressionResult]) -> list[RegressionResult]:
    """Largest symbol-ordered subset whose residual covariance is non-singular.

    When the test assets are the same stocks the factors are built from,
    their residuals obey exact linear constraints (the equal-weighted market
    residual is identically zero, for one), so the full covariance is
    singular. Stocks are added in symbol order and skipped if they do not
    raise the rank.
    """
    kept: list[RegressionResult] = []
    for r in results:
        trial = np.column_stack([k.residuals for k in kept + [r]])
        if np.linalg.matrix_rank(trial.T @ trial / trial.shape[0]) == len(kept) + 1:
            kept.append(r)
    return kept


def stage_grs(cfg: RunConfig, run_dir: Path) -> dict:
    regs = run_regressions(cfg, run_dir)
    summary = {}
    for model, (results, series) in regs.items():
        kept = full_rank_assets(results)
        kept_ids = {id(r) for r in kept}
        dropped = sorted(r.symbol for r in results if id(r) not in kept_ids)
        if dropped:
            logger.warning("%s GRS: dropped %d assets with linearly dependent residuals: %s",
                           model, len(dropped), ", ".join(dropped))
        res = grs_test(kept, series).to_dict()
        res["dropped_assets"] = dropped
        res["mean_abs_alpha_all"] = float(np.mean([abs(r.alpha) for r in results]))
        summary[model] = res
    _write_json(run_dir / "grs.json", cfg, summary)
    return summary


def stage_risk(cfg: RunConfig, run_dir: Path) -> dict:
    rows = load_run_panel(cfg, run_dir)
    rc = cfg.risk
    by_sym: dict[str, list[PanelRow]] = defaultdict(list)
    for r in rows:
        if r.return_1d is not None:
            by_sym[r.symbol].append(r)
    per_symbol, params_doc, out_rows, scored_from = {}, {}, [], {}
    for i, sym in enumerate(sorted(by_sym)):
        seq = sorted(by_sym[sym], key=lambda r: r.date)
        dates = [r.date for r in seq]
        rets = np.array([r.return_1d for r in seq])
        segs = [cfg.splits.segment(d) for d in dates]
        fit_mask = np.array([s in ("train", "validation") for s in segs])
        test_idx = [k for k, s in enumerate(segs) if s == "test"]
        if not test_idx or fit_mask.sum() < 250:
            logger.warning("skipping risk for %s: %d fitting returns, %d test dates",
                           sym, int(fit_mask.sum()), len(test_idx))
            continue
        fit = fit_egarch(rets[fit_mask], rc.p, rc.q, rc.n_starts, seed=cfg.rng_seed + i,
                         variant=rc.variant)
        last = test_idx[-1] + 1
        try:
            vol = egarch_filter(fit.params, rets[:last] - fit.mu, init_var=fit.init_var,
                                variant=rc.variant, mu=fit.mu)
        except NumericalError as exc:
            logger.warning("skipping risk for %s: %s", sym, exc)
            continue
        var = compute_var(vol, rc.confidence)
        realized = rets[:last]
        start = test_idx[0]
        metrics, act = evaluate_var(var, realized, rc.window, start=start)
        per_symbol[sym] = (var, realized)
        scored_from[sym] = start
        params_doc[sym] = {"params": fit.params.to_dict(), "loglik": fit.loglik, "mu": fit.mu,
                           "metrics": metrics.to_dict()}
        for k in range(start, last):
            out_rows.append([sym, dates[k].isoformat(), repr(float(var.mu[k])), repr(float(var.sigma[k])),
                             repr(float(var.var[k])), repr(float(act[k])),
                             int(realized[k] < var.var[k])])
    if not per_symbol:
        raise ValidationError("no symbol has enough history for EGARCH fitting")
    with open(run_dir / "risk.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {_stamp(cfg)}\n")
        w = csv.writer(fh)
        w.writerow(["symbol", "date", "mu", "sigma", "var", "actual_var", "violation_flag"])
        w.writerows(out_rows)
    per_stock = {s: params_doc[s]["metrics"] for s in params_doc}
    if rc.aggregation == "cross_section":
        if len(set(scored_from.values())) != 1:
            raise ValidationError("cross-sectional VaR aggregation needs aligned test windows")
        overall = aggregate_var_metrics(per_symbol, rc.window, "cross_section",
                                        start=next(iter(scored_from.values()))).to_dict()
    else:
        overall = {k: float(np.mean([m[k] for m in per_stock.values()]))
                   for k in ("rmse", "mae", "coverage_rate", "var_loss")}
    _write_json(run_dir / "risk_metrics.json", cfg,
                {"aggregation": rc.aggregation, "overall": overall, "per_symbol": per_stock,
                 "confidence": rc.confidence, "window": rc.window})
    _write_json(run_dir / "egarch_params.json", cfg, {"symbols": params_doc})
    return overall


def load_risk_rows(cfg: RunConfig, run_dir: Path) -> dict[tuple[str, date], dict]:
    path = _require(run_dir, "risk.csv", "risk")
    return {(r["symbol"], date.fromisoformat(r["date"])): r for r in _read_stamped_csv(cfg, path)}


def trade_plans(cfg: RunConfig, preds: dict[tuple[str, date], dict]) -> list[bt.TradePlan]:
    by_date: dict[date, list[str]] = defaultdict(list)
    test_dates = set()
    for (sym, day), rec in preds.items():
        if cfg.splits.segment(day) != "test":
            continue
        test_dates.add(day)
        if rec["label"] == Label.POSITIVE:
            by_date[day].append(sym)
    return [bt.TradePlan(day, by_date.get(day, ())) for day in sorted(test_dates)]


def stage_backtest(cfg: RunConfig, run_dir: Path, rows: list[PanelRow] | None = None) -> dict:
    rows = rows if rows is not None else load_run_panel(cfg, run_dir)
    preds = load_predictions(cfg, run_dir)
    plans = trade_plans(cfg, preds)
    if not plans:
        raise ValidationError("no test dates to backtest")
    result = bt.run_backtest(rows, plans, cfg.backtest.cost)
    bt.write_ledger(result.ledger, run_dir / "ledger.csv", _stamp(cfg))
    result.curve.to_csv(run_dir / "curve.csv", _stamp(cfg))
    model = bt.backtest_metrics(result.curve).to_dict()

    universe = defaultdict(list)
    for r in rows:
        if r.open_next is not None:
            universe[r.date].append(r.symbol)
    rng = np.random.default_rng(cfg.rng_seed)
    random_sharpes, random_returns = [], []
    for _ in range(cfg.backtest.random_replications):
        rnd = bt.run_backtest(rows, bt.random_plans(plans, universe, rng), cfg.backtest.cost)
        m = bt.backtest_metrics(rnd.curve)
        random_sharpes.append(m.sharpe_ratio)
        random_returns.append(m.annualized_return)
    finite = [s for s in random_sharpes if s is not None]
    summary = {
        "model": model,
        "random": {"replications": cfg.backtest.random_replications,
                   "sharpe": random_sharpes, "annualized_return": random_returns,
                   "sharpe_mean": float(np.mean(finite)) if finite else None},
        "trading_days": len(plans),
        "skipped_positions": len(result.skipped),
        "cost": cfg.backtest.cost,
    }
    _write_json(run_dir / "backtest_metrics.json", cfg, summary)
    return summary


def stage_report(cfg: RunConfig, run_dir: Path) -> dict:
    rows = load_run_panel(cfg, run_dir)
    preds = load_predictions(cfg, run_dir)
    risk_rows = load_risk_rows(cfg, run_dir)
    regs = run_regressions(cfg, run_dir, rows)
    results, series = regs["ff5news"]
    by_symbol = {r.symbol: r for r in results}
    headlines = {(r.symbol, r.date): r.headline for r in rows}
    out_dir = run_dir / "reports"
    out_dir.mkdir(exist_ok=True)
    symbols = cfg.report.symbols or sorted(by_symbol)
    llm = cfg.report.llm
    if llm.prompt_file is not None:
        llm = dataclasses.replace(llm, prompt_file=str(cfg.resolve(llm.prompt_file)))
    written = []
    for sym in symbols:
        if sym not in by_symbol:
            logger.warning("no FF5-News regression for %s; no report", sym)
            continue
        days = sorted(d for (s, d) in risk_rows if s == sym and d in series.dates)
        if not days:
            logger.warning("no risk estimate for %s in the window; no report", sym)
            continue
        day = days[-1]
        rk = risk_rows[(sym, day)]
        var = VarEstimate(float(rk["var"]), cfg.risk.confidence,
                          normal_quantile(cfg.risk.confidence), float(rk["mu"]), float(rk["sigma"]))
        decomp = decompose(by_symbol[sym], series, day)
        label = preds.get((sym, day), {}).get("label")
        doc = render_report(decomp, var, sym, day, None if label is None else label.short,
                            headlines.get((sym, day)))
        relay = relay_llm(doc, llm)
        stem = f"{sym}_{day.isoformat()}"
        (out_dir / f"{stem}.md").write_text(
            relay.text.rstrip("\n") + f"\n<!-- {_stamp(cfg)} -->\n", encoding="utf-8")
        sidecar = json.loads(doc.to_json())
        sidecar.update({"config_hash": cfg.config_hash(), "fallback": relay.fallback,
                        "from_llm": relay.from_llm, "model_label": None if label is None else label.short})
        (out_dir / f"{stem}.json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n",
                                              encoding="utf-8")
        written.append(stem)
    return {"reports": len(written)}


STAGE_FUNCS: dict[str, Callable[[RunConfig, Path], dict]] = {
    "ingest": stage_ingest,
    "train": stage_train,
    "predict": stage_predict,
    "factors": stage_factors,
    "regress": stage_regress,
    "grs": stage_grs,
    "risk": stage_risk,
    "backtest": stage_backtest,
    "report": stage_report,
}


def run_stage(cfg: RunConfig, stage: str) -> dict:
    if stage == "ingest":
        cfg.validate(check_paths=True)
    run_dir = prepare_run_dir(cfg)
    try:
        return STAGE_FUNCS[stage](cfg, run_dir)
    except Exception as exc:
        raise StageError(stage, exc) from exc


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: RunConfig, run_dir: Path) -> dict:
    files = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    digests = {str(p.relative_to(run_dir)): file_digest(p) for p in files}
    _write_json(run_dir / "manifest.json", cfg, {"artifacts": digests})
    return digests


def run_pipeline(cfg: RunConfig, stages=STAGES) -> dict:
    """Run stages in order; the first failure stops the run and names the stage."""
    cfg.validate(check_paths=True)
    run_dir = prepare_run_dir(cfg)
    summary = {}
    for stage in stages:
        logger.info("running stage %s", stage)
        try:
            summary[stage] = STAGE_FUNCS[stage](cfg, run_dir)
        except Exception as exc:
            raise StageError(stage, exc) from exc
    write_manifest(cfg, run_dir)
    return summary
