"""Per-stock explainable report built from factor contributions and VaR."""

from __future__ import annotations

import hashlib
import http.client
import json
import logging
import math
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping

from .factor_model import FactorReturnsSeries, RegressionResult
from .risk import VarEstimate

logger = logging.getLogger(__name__)

# (key, factor column, display title)
DIMENSIONS = (
    ("market", "mkt_excess", "Market Factor"),
    ("size", "smb", "Size Factor"),
    ("valuation", "hml", "Valuation (BP) Factor"),
    ("profitability", "rmw", "Profitability Factor"),
    ("investment", "cma", "Investment Factor"),
    ("news_effect", "news", "News Effect Factor"),
)

REPORT_PROMPT = (
    "The JSON context describes one stock on one trading day: the expected excess return split "
    "into per-factor contributions, a value-at-risk estimate and a trend label. Write a Markdown "
    "report with the headings Return forecasting, Risk assessment, Overall trend and Summary. "
    "Under Return forecasting, discuss every entry of return_forecasting.dimensions by its title: "
    "Market Factor, Size Factor, Valuation (BP) Factor, Profitability Factor, Investment Factor "
    "and News Effect Factor. Under Risk assessment, state max_potential_loss as a percentage. "
    "Under Overall trend, write the overall_trend value unchanged. Close with a one-paragraph "
    "Summary that weighs the return drivers against the risk figure."
)


@dataclass(frozen=True)
class Contribution:
    key: str
    title: str
    loading: float | None
    factor_value: float | None

    @property
    def value(self) -> float | None:
        if self.loading is None or self.factor_value is None:
            return None
        return self.loading * self.factor_value


@dataclass(frozen=True)
class ReturnDecomposition:
    alpha: float
    contributions: tuple[Contribution, ...]

    @property
    def predicted_excess_return(self) -> float:
        return self.alpha + sum(c.value for c in self.contributions if c.value is not None)

    def contribution(self, key: str) -> float | None:
        for c in self.contributions:
            if c.key == key:
                return c.value
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "predicted_excess_return": self.predicted_excess_return,
            "dimensions": {
                c.key: {"title": c.title, "loading": c.loading, "factor_value": c.factor_value,
                        "contribution": c.value}
                for c in self.contributions
            },
        }


def decompose(regression: RegressionResult, factor_values: Mapping[str, float] | FactorReturnsSeries,
              day: date | None = None) -> ReturnDecomposition:
    """Split the model-implied excess return into loading x factor terms.

    A result without a news loading reports that dimension as unavailable
    (``None``) rather than zero.
    """
    if isinstance(factor_values, FactorReturnsSeries):
        if day is None:
            raise ValueError("a date is required to pick factor values from a series")
        factor_values = factor_values.at(day)
    parts = []
    for key, column, title in DIMENSIONS:
        loading = regression.loading(column)
        value = factor_values.get(column) if loading is not None else None
        parts.append(Contribution(key, title, loading, None if value is None else float(value)))
    return ReturnDecomposition(float(regression.alpha), tuple(parts))


@dataclass(frozen=True)
class ReportDoc:
    symbol: str
    date: str
    return_forecasting: tuple[tuple[str, str], ...]
    risk_assessment: str
    max_potential_loss: float
    overall_trend: str
    summary: str
    provenance: str
    decomposition: dict = field(default_factory=dict, compare=True, hash=False)
    var: dict = field(default_factory=dict, compare=True, hash=False)

    def to_markdown(self) -> str:
        lines = [f"# Stock report: {self.symbol} ({self.date})", "", "## Return forecasting", ""]
        lines += [f"- **{title}**: {text}" for title, text in self.return_forecasting]
        lines += ["", "## Risk assessment", "", self.risk_assessment, "",
                  "## Overall trend", "", self.overall_trend, "",
                  "## Summary", "", self.summary, "",
                  f"<!-- provenance: {self.provenance} -->", ""]
        return "\n".join(lines)

    def to_json(self) -> str:
        doc = {
            "symbol": self.symbol,
            "date": self.date,
            "overall_trend": self.overall_trend,
            "max_potential_loss": self.max_potential_loss,
            "decomposition": self.decomposition,
            "var": self.var,
            "provenance": self.provenance,
        }
        return json.dumps(doc, sort_keys=True, indent=2)


def _pct(x: float) -> str:
    return f"{x * 100:+.2f}%"


def _describe(c: Contribution) -> str:
    if c.value is None:
        return "unavailable (the fitted model has no loading for this factor)."
    v = c.value
    if v > 0:
        tone = "supports the expected return"
    elif v < 0:
        tone = "weighs on the expected return"
    else:
        tone = "is neutral"
    return (f"{_pct(v)} contribution, {tone} "
            f"(exposure {c.loading:.4f} x factor return {c.factor_value:.6f}).")


def trend_of(predicted_excess_return: float) -> str:
    return "Positive" if predicted_excess_return > 0 else "Negative"


def _provenance(payload: Mapping) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def render_report(decomp: ReturnDecomposition, var: VarEstimate, symbol: str = "",
                  day: date | str = "", label: str | None = None,
                  headline: str | None = None) -> ReportDoc:
    """Fill the fixed template; identical inputs give identical documents."""
    pred = decomp.predicted_excess_return
    trend = trend_of(pred)
    forecast = tuple((c.title, _describe(c)) for c in decomp.contributions)

    loss = -var.var_value if var.var_value < 0 else 0.0
    confidence = f"{var.alpha_level * 100:g}%"
    if var.var_value < 0:
        risk = (f"At {confidence} confidence the estimated maximum potential one-day loss is "
                f"{loss * 100:.2f}% (VaR {var.var_value:.6f}, expected return {var.mu:.6f}, "
                f"volatility {var.sigma:.6f}).")
    else:
        risk = (f"At {confidence} confidence no one-day loss is expected (VaR {var.var_value:.6f}, "
                f"expected return {var.mu:.6f}, volatility {var.sigma:.6f}).")

    available = [c for c in decomp.contributions if c.value is not None]
    top = max(available, key=lambda c: c.value, default=None)
    bottom = min(available, key=lambda c: c.value, default=None)
    summary = [f"The model-implied excess return is {_pct(pred)} (alpha {_pct(decomp.alpha)})."]
    if top is not None and top.value > 0:
        summary.append(f"The strongest support comes from the {top.title.lower()} ({_pct(top.value)}).")
    if bottom is not None and bottom.value < 0:
        summary.append(f"The largest drag is the {bottom.title.lower()} ({_pct(bottom.value)}).")
    if label:
        summary.append(f"The news classifier rates the latest information as {label}.")
    if headline:
        summary.append(f"Latest headline: \"{headline}\".")
    summary.append(f"With a potential loss of {loss * 100:.2f}% at {confidence} confidence, "
                   f"the overall outlook is {trend.lower()}.")

    var_dict = {"var": var.var_value, "alpha_level": var.alpha_level, "z_alpha": var.z_alpha,
                "mu": var.mu, "sigma": var.sigma}
    decomp_dict = decomp.to_dict()
    prov = _provenance({"symbol": symbol, "date": str(day), "label": label, "headline": headline,
                        "decomposition": decomp_dict, "var": var_dict})
    return ReportDoc(
        symbol=symbol, date=str(day), return_forecasting=forecast, risk_assessment=risk,
        max_potential_loss=loss, overall_trend=trend, summary=" ".join(summary),
        provenance=prov, decomposition=decomp_dict, var=var_dict,
    )


@dataclass
class LlmRelayConfig:
    endpoint: str = ""
    model: str = ""
    timeout: float = 10.0
    enabled: bool = False
    prompt_file: str | None = None

    def prompt(self) -> str:
        """Prompt text: the contents of ``prompt_file`` when set, else :data:`REPORT_PROMPT`."""
        if self.prompt_file is None:
            return REPORT_PROMPT
        with open(self.prompt_file, encoding="utf-8") as fh:
            return fh.read().strip()


@dataclass(frozen=True)
class RelayResult:
    text: str
    fallback: bool
    from_llm: bool


def relay_context(doc: ReportDoc) -> dict:
    return {
        "symbol": doc.symbol,
        "date": doc.date,
        "return_forecasting": doc.decomposition,
        "risk_assessment": doc.var,
        "max_potential_loss": doc.max_potential_loss,
        "overall_trend": doc.overall_trend,
    }


def relay_llm(doc: ReportDoc, config: LlmRelayConfig) -> RelayResult:
    """Send the report prompt plus the structured context to a completion endpoint.

    One POST with a hard timeout. Any failure returns the template markdown
    with ``fallback=True``; a disabled relay returns it with ``fallback=False``.
    """
    if not config.enabled:
        return RelayResult(doc.to_markdown(), fallback=False, from_llm=False)
    try:
        body = json.dumps({
            "model": config.model,
            "prompt": config.prompt(),
            "context": json.dumps(relay_context(doc), sort_keys=True),
        }).encode("utf-8")
        req = urllib.request.Request(config.endpoint, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=config.timeout) as resp:
            text = resp.read().decode("utf-8", errors="replace")
    except (urllib.error.URLError, http.client.HTTPException, OSError, ValueError) as exc:
        logger.warning("LLM relay failed (%s); using template report", exc)
        return RelayResult(doc.to_markdown(), fallback=True, from_llm=False)
    return RelayResult(text, fallback=False, from_llm=True)


def is_finite_inputs(decomp: ReturnDecomposition, var: VarEstimate) -> bool:
    values = [decomp.alpha, var.var_value, var.mu, var.sigma]
    for c in decomp.contributions:
        values += [v for v in (c.loading, c.factor_value) if v is not None]
    return all(math.isfinite(v) for v in values)
