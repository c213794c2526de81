import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finreport.errors import NumericalError, ValidationError
from finreport.risk import (SQRT_2_OVER_PI, EgarchParams, VolSeries, actual_var,
                            aggregate_var_metrics, compute_var, egarch_filter, egarch_loglik,
                            evaluate_var, fit_egarch, simulate_egarch)

ZERO = EgarchParams(0.0, (0.0,), (0.0,), (0.0,))


def reference_filter(params, e, init_var, variant="squared"):
    """Plain-Python log-variance recursion on standardised shocks."""
    lnv, z = [], []
    for t in range(len(e)):
        v = params.omega
        for l, a in enumerate(params.alpha, start=1):
            if t - l >= 0:
                v += a * (abs(z[t - l]) - math.sqrt(2 / math.pi))
        for j, (b, g) in enumerate(zip(params.beta, params.gamma), start=1):
            if t - j >= 0:
                v += b * lnv[t - j] + (g * z[t - j] ** 2 if variant == "squared" else g * z[t - j])
            else:
                v += b * math.log(init_var) + (g if variant == "squared" else 0.0)
        lnv.append(v)
        z.append(e[t] / math.exp(v / 2))
    return np.exp(np.array(lnv) / 2)


def test_expected_abs_normal():
    assert SQRT_2_OVER_PI == pytest.approx(0.7978845608028654, abs=1e-15)
    z = np.random.default_rng(0).standard_normal(400_000)
    assert np.mean(np.abs(z)) == pytest.approx(SQRT_2_OVER_PI, abs=5e-3)


def test_filter_constant_cases():
    e = np.random.default_rng(1).normal(size=50)
    assert np.allclose(egarch_filter(ZERO, e).sigma, 1.0, atol=0)
    two = EgarchParams(2 * math.log(2), (0.0,), (0.0,), (0.0,))
    assert np.allclose(egarch_filter(two, e).sigma, 2.0, rtol=1e-15)


@pytest.mark.parametrize("variant", ["squared", "signed"])
def test_filter_matches_reference(variant):
    p = EgarchParams(-0.3, (0.12, 0.05), (0.6, 0.3), (0.04, -0.02))
    e = np.random.default_rng(2).normal(0, 0.02, 300)
    got = egarch_filter(p, e, init_var=4e-4, variant=variant).sigma
    want = reference_filter(p, e, 4e-4, variant)
    assert np.allclose(got, want, rtol=1e-12)


def test_filter_presample_uses_sample_variance():
    e = np.random.default_rng(3).normal(0, 0.05, 100)
    p = EgarchParams(0.0, (0.0,), (0.5,), (0.0,))
    assert egarch_filter(p, e).sigma[0] == pytest.approx(math.exp(0.25 * math.log(np.var(e))), rel=1e-12)


def test_filter_overflow_error():
    p = EgarchParams(400.0, (0.0,), (0.9,), (0.0,))
    with pytest.raises(NumericalError, match="explosive"):
        egarch_filter(p, np.ones(10), init_var=1.0)


def test_filter_too_short():
    with pytest.raises(ValidationError):
        egarch_filter(EgarchParams(0.0, (0.0, 0.0), (0.0,), (0.0,)), np.ones(2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1, 0), st.floats(0, 0.3), st.floats(0, 0.95), st.floats(0, 0.1))
def test_filter_positive_finite(seed, omega, alpha, beta, gamma):
    p = EgarchParams(omega, (alpha,), (beta,), (gamma,))
    e = np.random.default_rng(seed).normal(0, 0.02, 200)
    s = egarch_filter(p, e).sigma
    assert np.all(np.isfinite(s)) and np.all(s > 0)


def test_vol_series_rejects_nonpositive():
    with pytest.raises(NumericalError):
        VolSeries(np.array([0.1, 0.0]), np.zeros(2), np.zeros(2))


@pytest.fixture(scope="module")
def garch_fit():
    true = EgarchParams(-0.1, (0.15,), (0.9,), (0.02,))
    r = simulate_egarch(true, 3000, np.random.default_rng(21))
    return r, fit_egarch(r, seed=0)


def test_fit_deterministic(garch_fit):
    r, fit = garch_fit
    again = fit_egarch(r, seed=0)
    assert again.params == fit.params and again.loglik == fit.loglik


def test_fit_beats_every_start(garch_fit):
    _, fit = garch_fit
    finite = [v for v in fit.start_logliks if math.isfinite(v)]
    assert len(fit.start_logliks) == 20 and finite
    assert all(fit.loglik >= v for v in finite)


def test_fit_loglik_reproducible(garch_fit):
    r, fit = garch_fit
    ll = egarch_loglik(fit.params, r - fit.mu, init_var=fit.init_var, variant=fit.variant)
    assert abs(ll - fit.loglik) < 1e-8


def test_fit_feasible_region(garch_fit):
    _, fit = garch_fit
    p = fit.params
    assert p.stationary and p.monotone_response("squared")


def test_fit_requires_250():
    with pytest.raises(ValidationError):
        fit_egarch(np.zeros(100))


def _iid_fit(seed=7):
    r = np.random.default_rng(seed).normal(0.0, 0.02, 3000)
    return fit_egarch(r, seed=seed)


def test_iid_fit_level_and_shock_terms():
    fit = _iid_fit()
    sigma_bar = float(np.sqrt(np.mean(fit.vol.sigma ** 2)))
    assert 0.018 <= sigma_bar <= 0.022
    assert abs(fit.params.alpha[0]) < 0.15
    assert abs(fit.params.gamma[0]) < 0.15


@pytest.mark.xfail(strict=True, reason="with no volatility clustering beta is not identified: "
                   "every (omega, beta) pair with the same stationary level fits equally well")
def test_iid_fit_beta_small():
    assert all(abs(_iid_fit(seed).params.beta[0]) < 0.15 for seed in (7, 8, 9))


def test_simulated_recovery_signed():
    true = EgarchParams(-0.2, (0.2,), (0.9,), (-0.08,))
    r = simulate_egarch(true, 4000, np.random.default_rng(3), variant="signed")
    fit = fit_egarch(r, variant="signed", seed=1)
    got = fit.params.to_vector()
    assert np.all(np.abs(got[1:] - true.to_vector()[1:]) < 0.15)


def test_var_examples():
    v = compute_var((0.0, 1.0), 0.95)
    assert v.var[0] == pytest.approx(-1.6449, abs=1e-4)
    v = compute_var((0.001, 0.02), 0.95)
    assert v.var[0] == pytest.approx(-0.031898, abs=1e-5)
    assert compute_var((0.003, 0.0), 0.99).var[0] == 0.003
    with pytest.raises(ValidationError):
        compute_var((0.0, 1.0), 0.4)


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.01, 0.01), st.floats(0.001, 0.1), st.floats(0.51, 0.98), st.floats(0.001, 0.019))
def test_var_monotone_and_exact(mu, sigma, a, da):
    lo, hi = compute_var((mu, sigma), a), compute_var((mu, sigma), a + da)
    assert hi.var[0] < lo.var[0]
    assert lo.var[0] == mu - sigma * lo.z_alpha


def test_var_from_vol_series():
    vol = VolSeries(np.array([0.01, 0.02]), np.array([0.0, 0.001]), np.zeros(2))
    v = compute_var(vol, 0.95)
    assert np.array_equal(v.var, vol.mu - vol.sigma * v.z_alpha)
    assert v[1].sigma == 0.02


def test_actual_var_window():
    r = np.arange(1.0, 31.0)
    act = actual_var(r, 20, 0.95)
    assert np.all(np.isnan(act[:19]))
    assert act[19] == pytest.approx(np.quantile(np.arange(1.0, 21.0), 0.05))


def test_evaluate_perfect_prediction():
    r = np.random.default_rng(0).normal(0, 0.02, 200)
    act = actual_var(r, 40, 0.95)
    pred = compute_var((np.nan_to_num(act, nan=0.0), 0.0), 0.95)
    m, _ = evaluate_var(pred, r, 40)
    assert m.var_loss == m.rmse == m.mae == 0.0


def test_evaluate_window_errors():
    r = np.zeros(30)
    pred = compute_var((np.zeros(30), np.ones(30)), 0.95)
    with pytest.raises(ValidationError):
        evaluate_var(pred, r, 40)
    with pytest.raises(ValidationError):
        evaluate_var(pred, r, 10)


def test_evaluate_start_restricts_scoring():
    rng = np.random.default_rng(4)
    r = rng.normal(0, 0.02, 300)
    pred = compute_var((0.0, 0.02), 0.95)
    pred = compute_var((np.zeros(300), np.full(300, 0.02)), 0.95)
    full, act = evaluate_var(pred, r, 60)
    tail, _ = evaluate_var(pred, r, 60, start=200)
    assert tail.n_dates == 100 and full.n_dates == 300
    diff = pred.var[200:] - act[200:]
    assert tail.mae == pytest.approx(np.mean(np.abs(diff)))
    assert tail.coverage_rate == pytest.approx(np.mean(r[200:] >= pred.var[200:]))


def test_aggregations():
    rng = np.random.default_rng(8)
    per = {}
    for s in "abc":
        r = rng.normal(0, 0.02, 150)
        per[s] = (compute_var((np.zeros(150), np.full(150, 0.02)), 0.95), r)
    a = aggregate_var_metrics(per, 30, "per_stock")
    singles = [evaluate_var(v, r, 30)[0] for v, r in per.values()]
    assert a.rmse == pytest.approx(np.mean([m.rmse for m in singles]))
    b = aggregate_var_metrics(per, 30, "cross_section")
    assert b.coverage_rate == pytest.approx(a.coverage_rate)
    assert b.mae == pytest.approx(a.mae)
    with pytest.raises(ValueError):
        aggregate_var_metrics(per, 30, "pooled")


def test_iid_coverage_small_sample():
    r = np.random.default_rng(2).normal(0, 0.02, 4000)
    pred = compute_var((np.zeros(4000), np.full(4000, 0.02)), 0.95)
    m, _ = evaluate_var(pred, r, 250)
    assert abs(m.coverage_rate - 0.95) < 0.02
