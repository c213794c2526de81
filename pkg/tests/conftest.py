import logging
from datetime import date, timedelta

import numpy as np
import pytest

from finreport.market_data import PriceBar

# criterion number -> (passed, description, seconds); filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str, float]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, desc, secs = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {desc} ({secs:.1f} s)")


def make_bars(symbol, closes, start=date(2020, 1, 6), opens=None):
    bars = []
    day = start
    for i, c in enumerate(closes):
        o = c if opens is None else opens[i]
        bars.append(PriceBar(symbol, day, o, max(o, c) * 1.01, min(o, c) * 0.99, c, 1000))
        day += timedelta(days=1)
    return bars


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def caplog_warn(caplog):
    caplog.set_level(logging.WARNING)
    return caplog


def hand_panel():
    """PanelRows and news labels for the 12-stock, 3-date factor fixture in ``oracles``."""
    from finreport.classifier import Label
    from finreport.market_data import PanelRow, StockFactorRow
    from oracles import HAND_NEWS, HAND_RANKS, HAND_SYMBOLS, hand_return

    letter = {"P": Label.POSITIVE, "M": Label.NEUTRAL, "N": Label.NEGATIVE}
    days = [date(2021, 6, 1), date(2021, 6, 2), date(2021, 6, 3)]
    rows, labels = [], {}
    for k, day in enumerate(days):
        labels[day] = {}
        for i, sym in enumerate(HAND_SYMBOLS):
            fac = StockFactorRow(sym, day, float(i + 1), float(HAND_RANKS["bp"][i]),
                                 float(HAND_RANKS["op"][i]), float(HAND_RANKS["inv"][i]))
            rows.append(PanelRow(sym, day, 1.0, 1.0, 1.0, 1.0, 0.0, return_1d=hand_return(k, i),
                                 factors=fac))
            labels[day][sym] = letter[HAND_NEWS[k][i]]
    return rows, labels, days


def five_day_panel():
    """PanelRows and TradePlans for the five-day backtest fixture in ``oracles``."""
    from finreport.backtest import TradePlan
    from finreport.market_data import PanelRow
    from oracles import FIVE_DAY_DATES, FIVE_DAY_OPENS, FIVE_DAY_PLANS

    days = [date.fromisoformat(d) for d in FIVE_DAY_DATES]
    rows = []
    for sym, opens in FIVE_DAY_OPENS.items():
        for t in range(len(days) - 1):
            o = opens[t]
            rows.append(PanelRow(sym, days[t], o, o * 1.01, o * 0.99, o, 1000, open_next=opens[t + 1]))
    plans = [TradePlan(days[t], picks) for t, picks in enumerate(FIVE_DAY_PLANS)]
    return rows, plans, days[:-1]


@pytest.fixture
def echo_server():
    """Local HTTP endpoint that answers every POST with the request body."""
    import http.server
    import threading

    class Echo(http.server.BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = http.server.HTTPServer(("127.0.0.1", 0), Echo)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/complete"
    server.shutdown()
    server.server_close()


def closed_port_url():
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}/v1/complete"
