import json
import math
from datetime import date
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import closed_port_url
from finreport.factor_model import RegressionResult
from finreport.report import (DIMENSIONS, REPORT_PROMPT, LlmRelayConfig, decompose, relay_llm,
                              render_report, trend_of)
from finreport.risk import VarEstimate

GOLDEN = Path(__file__).parent / "golden"
NEWS_COLS = ("mkt_excess", "smb", "hml", "rmw", "cma", "news")


def regression(alpha, loadings, names=NEWS_COLS):
    return RegressionResult(alpha, dict(zip(names, loadings)), np.zeros(3), 0.5, 3, "AAA")


def golden_inputs():
    reg = regression(0.0004, (1.1, 0.35, -0.2, 0.15, -0.05, 0.8))
    factors = {"mkt_excess": 0.006, "smb": -0.002, "hml": 0.0015, "rmw": 0.0, "cma": 0.001,
               "news": 0.004}
    var = VarEstimate(-0.02, 0.95, 1.6448536269514722, 0.0029, 0.0139)
    return decompose(reg, factors), var


def test_decompose_examples():
    d = decompose(regression(0.001, (0,) * 6), dict.fromkeys(NEWS_COLS, 0.01))
    assert d.predicted_excess_return == 0.001
    assert all(c.value == 0 for c in d.contributions)

    d = decompose(regression(0.0, (1, 0, 0, 0, 0, 0)), {"mkt_excess": 0.02, "smb": 0, "hml": 0,
                                                       "rmw": 0, "cma": 0, "news": 0})
    assert d.contribution("market") == 0.02 and d.predicted_excess_return == 0.02

    d = decompose(regression(0.0, (1, 0.5, 0, 0, 0, 2)),
                  dict(zip(NEWS_COLS, (0.01, 0.02, 0, 0, 0, 0.005))))
    assert d.predicted_excess_return == pytest.approx(0.03, abs=1e-12)


def test_decompose_ff5_marks_news_unavailable():
    reg = regression(0.0, (1, 0.5, 0, 0, 0), names=NEWS_COLS[:5])
    d = decompose(reg, dict(zip(NEWS_COLS, (0.01, 0.02, 0, 0, 0, 0.005))))
    assert d.contribution("news_effect") is None
    assert d.predicted_excess_return == pytest.approx(0.02)
    assert d.to_dict()["dimensions"]["news_effect"]["contribution"] is None
    text = render_report(d, golden_inputs()[1]).to_markdown()
    assert "News Effect Factor**: unavailable" in text


def test_dimension_titles_follow_prompt():
    titles = [t for _, _, t in DIMENSIONS]
    for t in titles:
        assert t in REPORT_PROMPT


def test_golden_markdown_and_sidecar():
    d, var = golden_inputs()
    doc = render_report(d, var, symbol="AAA", day=date(2020, 11, 30), label="positive",
                        headline="Company AAA beats estimates")
    assert doc.to_markdown() == (GOLDEN / "AAA_2020-11-30.md").read_text(encoding="utf-8")
    assert doc.to_json() == (GOLDEN / "AAA_2020-11-30.json").read_text(encoding="utf-8").rstrip("\n")


def test_two_percent_loss_wording():
    d, var = golden_inputs()
    doc = render_report(d, var)
    assert "maximum potential one-day loss is 2.00%" in doc.risk_assessment
    assert doc.max_potential_loss == pytest.approx(0.02)


def test_nonnegative_var_means_no_loss():
    d, _ = golden_inputs()
    doc = render_report(d, VarEstimate(0.001, 0.99, 2.326, 0.001, 0.0))
    assert doc.max_potential_loss == 0.0 and "no one-day loss" in doc.risk_assessment


def test_deterministic():
    d, var = golden_inputs()
    a = render_report(d, var, symbol="AAA", day="2020-11-30")
    b = render_report(*golden_inputs(), symbol="AAA", day="2020-11-30")
    assert a == b and a.to_markdown() == b.to_markdown() and a.to_json() == b.to_json()
    c = render_report(d, var, symbol="AAB", day="2020-11-30")
    assert c.provenance != a.provenance


def test_trend_tie_is_negative():
    assert trend_of(0.0) == "Negative" and trend_of(1e-300) == "Positive"
    d = decompose(regression(0.0, (0,) * 6), dict.fromkeys(NEWS_COLS, 0.0))
    assert render_report(d, golden_inputs()[1]).overall_trend == "Negative"


finite = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(finite, st.lists(finite, min_size=6, max_size=6), st.lists(finite, min_size=6, max_size=6))
def test_sum_of_parts_and_trend(alpha, loads, values):
    d = decompose(regression(alpha, loads), dict(zip(NEWS_COLS, values)))
    parts = alpha + sum(c.value for c in d.contributions)
    assert abs(d.predicted_excess_return - parts) < 1e-10
    expected = "Positive" if d.predicted_excess_return > 0 else "Negative"
    assert render_report(d, golden_inputs()[1]).overall_trend == expected


@settings(max_examples=200, deadline=None)
@given(finite, st.lists(finite, min_size=6, max_size=6), st.lists(finite, min_size=6, max_size=6),
       st.floats(1e-3, 1e3))
def test_trend_scale_invariant(alpha, loads, values, k):
    base = decompose(regression(alpha, loads), dict(zip(NEWS_COLS, values)))
    scaled = decompose(regression(alpha * k, loads), {c: v * k for c, v in zip(NEWS_COLS, values)})
    if abs(base.predicted_excess_return) > 1e-9:
        assert trend_of(base.predicted_excess_return) == trend_of(scaled.predicted_excess_return)


big = st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False)


@settings(max_examples=300, deadline=None)
@given(big, st.lists(big, min_size=5, max_size=6), st.lists(big, min_size=6, max_size=6),
       big, st.floats(0.501, 0.999), big, st.floats(0.0, 1e6),
       st.one_of(st.none(), st.text(max_size=40)))
def test_render_never_fails(alpha, loads, values, v, a, mu, sigma, headline):
    names = NEWS_COLS[:len(loads)]
    d = decompose(regression(alpha, loads, names), dict(zip(NEWS_COLS, values)))
    doc = render_report(d, VarEstimate(v, a, 1.0, mu, sigma), symbol="S", day="2020-01-02",
                        headline=headline)
    assert doc.to_markdown().startswith("# Stock report: S")
    json.loads(doc.to_json())


def test_relay_disabled_returns_template():
    doc = render_report(*golden_inputs())
    out = relay_llm(doc, LlmRelayConfig())
    assert out.text == doc.to_markdown() and not out.fallback and not out.from_llm


def test_relay_unreachable_falls_back(caplog):
    doc = render_report(*golden_inputs())
    cfg = LlmRelayConfig(endpoint=closed_port_url(), model="m", timeout=2.0, enabled=True)
    out = relay_llm(doc, cfg)
    assert out.fallback and not out.from_llm
    disabled = relay_llm(doc, LlmRelayConfig())
    assert out.text == disabled.text
    assert any("relay failed" in r.getMessage() for r in caplog.records)


def test_relay_bad_url_falls_back():
    doc = render_report(*golden_inputs())
    out = relay_llm(doc, LlmRelayConfig(endpoint="not a url", enabled=True))
    assert out.fallback


def test_relay_mock_echo(echo_server):
    doc = render_report(*golden_inputs(), symbol="AAA", day="2020-11-30")
    out = relay_llm(doc, LlmRelayConfig(endpoint=echo_server, model="mock", timeout=5.0, enabled=True))
    assert out.from_llm and not out.fallback
    sent = json.loads(out.text)
    assert sent["prompt"] == REPORT_PROMPT and sent["model"] == "mock"
    context = json.loads(sent["context"])
    assert set(context["return_forecasting"]["dimensions"]) == {k for k, _, _ in DIMENSIONS}
    assert context["overall_trend"] == doc.overall_trend
    assert math.isclose(context["risk_assessment"]["var"], -0.02)


def test_relay_prompt_file(echo_server, tmp_path):
    prompt = tmp_path / "prompt.txt"
    prompt.write_text("Summarise the context.\n", encoding="utf-8")
    doc = render_report(*golden_inputs())
    cfg = LlmRelayConfig(endpoint=echo_server, timeout=5.0, enabled=True, prompt_file=str(prompt))
    assert json.loads(relay_llm(doc, cfg).text)["prompt"] == "Summarise the context."
    missing = LlmRelayConfig(endpoint=echo_server, enabled=True, prompt_file=str(tmp_path / "none"))
    assert relay_llm(doc, missing).fallback
