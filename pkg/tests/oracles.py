"""Independent reference computations shared by the unit and acceptance tests.

Nothing here imports the package's numerical code; each oracle recomputes
its quantity from first principles with plain numpy / scipy.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats


# ---------------------------------------------------------------- classifier

def mlp_loss(tensors: dict, x_raw: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of the fused 2-layer ReLU network, no dropout."""
    x = tensors["w_alpha"] * x_raw
    h = np.maximum(x @ tensors["w1"].T + tensors["b1"], 0.0)
    z = h @ tensors["w2"].T + tensors["b2"]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(logp[np.arange(len(labels)), labels]))


def central_difference(tensors: dict, x_raw, labels, h: float = 1e-5) -> dict:
    grads = {}
    for name, arr in tensors.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = mlp_loss(tensors, x_raw, labels)
            flat[i] = old - h
            down = mlp_loss(tensors, x_raw, labels)
            flat[i] = old
            gf[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def expected_label_counts(n: int) -> tuple[int, int, int]:
    if n < 5:
        return 0, 0, 0
    return max(1, math.floor(0.2 * n + 1e-9)), math.floor(0.4 * n + 1e-9), math.floor(0.2 * n + 1e-9)


def gaussian_blobs(n: int = 300, seed: int = 0, dim: int = 6, spread: float = 0.5):
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, dim))
    centers[0, 0], centers[1, 1], centers[2, 2] = 3.0, 3.0, 3.0
    y = np.repeat(np.arange(3), n // 3)
    x = centers[y] + spread * rng.standard_normal((y.size, dim))
    return x, y


# ---------------------------------------------------------------- factors

def bracket(*values: float) -> float:
    """Average of one bracketed term; empty (NaN) members take the mean of the rest.

    Filling a gap with the mean of its siblings leaves that mean unchanged,
    so the bracket equals the plain mean of its non-empty members.
    """
    present = [v for v in values if not math.isnan(v)]
    return sum(present) / len(present)


def appendix_b(p: dict, with_news: bool) -> dict:
    """FF5 / FF5-News long-short formulas evaluated term by term.

    ``p`` maps names such as ``"SH_bp"`` or ``"BP_news"`` to portfolio
    returns, NaN for an empty portfolio.
    """
    def smb(groups, tag):
        return bracket(*(p[f"S{g}{tag}"] for g in groups)) - bracket(*(p[f"B{g}{tag}"] for g in groups))

    out = {
        "smb_bp": smb("HNL", "_bp"),
        "smb_op": smb("RNW", "_op"),
        "smb_inv": smb("CNA", "_inv"),
        "hml": bracket(p["BH_bp"], p["SH_bp"]) - bracket(p["BL_bp"], p["SL_bp"]),
        "rmw": bracket(p["BR_op"], p["SR_op"]) - bracket(p["BW_op"], p["SW_op"]),
        "cma": bracket(p["BC_inv"], p["SC_inv"]) - bracket(p["BA_inv"], p["SA_inv"]),
    }
    parts = [out["smb_bp"], out["smb_op"], out["smb_inv"]]
    if with_news:
        out["smb_news"] = smb("PMN", "_news")
        out["news"] = bracket(p["BP_news"], p["SP_news"]) - bracket(p["BN_news"], p["SN_news"])
        parts.append(out["smb_news"])
    out["smb"] = sum(parts) / len(parts)
    return out


def grs_reference(alpha, resid, f):
    """Standard GRS statistic and F(N, T-N-K) upper-tail p-value."""
    t, n = resid.shape
    k = f.shape[1]
    sigma = resid.T @ resid / t
    mu = f.mean(axis=0)
    omega = (f - mu).T @ (f - mu) / t
    stat = (t - n - k) / n * (alpha @ np.linalg.inv(sigma) @ alpha) / (1 + mu @ np.linalg.inv(omega) @ mu)
    return float(stat), float(stats.f.sf(stat, n, t - n - k))


# ---------------------------------------------------------------- backtest

def leg_cost_return(buy: float, sell: float, cost: float) -> float:
    return sell * (1 - cost) / (buy * (1 + cost)) - 1


def drawdown_reference(equity) -> float:
    peak, worst = -math.inf, 0.0
    for e in equity:
        peak = max(peak, e)
        worst = min(worst, e / peak - 1)
    return worst


# Twelve stocks, three dates. Caps 1..12 put A-F in S and G-L in B. Group
# letters below were assigned by hand from the rank columns (30/70
# percentiles of 12 values: ranks 1-4 low, 5-8 middle, 9-12 high).
HAND_SYMBOLS = "ABCDEFGHIJKL"
HAND_RANKS = {
    "bp": [1, 9, 5, 12, 4, 7, 2, 10, 6, 3, 11, 8],
    "op": [12, 1, 6, 3, 10, 7, 4, 11, 2, 9, 5, 8],
    "inv": [5, 2, 11, 8, 1, 10, 9, 3, 12, 6, 7, 4],
}
HAND_GROUPS = {
    "size": "SSSSSSBBBBBB",
    "bp": "LHNHLNLHNLHN",
    "op": "RWNWRNWRWRNN",
    "inv": "NCANCAACANNC",
}
HAND_NEWS = ["PPMNNMPMNPMN", "MNPPMNNPMMPN", "NPMNMPPMMPMP"]
HAND_RF = 0.0001


def hand_return(day_index: int, i: int) -> float:
    return 0.001 * (i + 1) * (-1) ** (i + day_index) + 0.0005 * day_index


def hand_factor_values(day_index: int) -> dict:
    """Factor values for one date of the 12-stock fixture, by direct averaging."""
    rets = [hand_return(day_index, i) for i in range(12)]
    news = HAND_NEWS[day_index]
    p = {}
    for dim, letters in (("bp", "HNL"), ("op", "RNW"), ("inv", "CNA"), ("news", "PMN")):
        col = news if dim == "news" else HAND_GROUPS[dim]
        for s in "SB":
            for g in letters:
                members = [rets[i] for i in range(12) if HAND_GROUPS["size"][i] == s and col[i] == g]
                p[f"{s}{g}_{dim}"] = sum(members) / len(members) if members else math.nan
    ff5 = appendix_b({k: v for k, v in p.items() if not k.endswith("_news")}, with_news=False)
    ff5n = appendix_b(p, with_news=True)
    mkt = sum(rets) / 12 - HAND_RF
    ff5["mkt_excess"] = ff5n["mkt_excess"] = mkt
    return {"ff5": ff5, "ff5news": ff5n, "portfolios": p}



# Five trading days, three stocks. Z is suspended on the sixth day, so the
# day-4 position in Z has no exit price and must be dropped.
FIVE_DAY_DATES = ("2021-03-01", "2021-03-02", "2021-03-03", "2021-03-04", "2021-03-05", "2021-03-08")
FIVE_DAY_OPENS = {
    "X": (100.0, 101.0, 99.5, 100.0, 102.0, 101.0),
    "Y": (50.0, 50.5, 51.0, 50.0, 49.0, 50.0),
    "Z": (20.0, 20.0, 20.4, 19.8, 20.0, None),
}
FIVE_DAY_PLANS = ({"X"}, {"X", "Y"}, set(), {"Y", "Z"}, {"X", "Y", "Z"})


def five_day_expected(cost: float) -> list[float]:
    """Equity after each of the five days, accumulated in exact rationals."""
    from fractions import Fraction

    c = Fraction(cost)
    equity, out = Fraction(1), []
    for t, picks in enumerate(FIVE_DAY_PLANS):
        legs = []
        for s in sorted(picks):
            buy, sell = FIVE_DAY_OPENS[s][t], FIVE_DAY_OPENS[s][t + 1]
            if sell is None:
                continue
            legs.append(Fraction(sell) * (1 - c) / (Fraction(buy) * (1 + c)) - 1)
        day = sum(legs, Fraction(0)) / len(legs) if legs else Fraction(0)
        equity *= 1 + day
        out.append(float(equity))
    return out
