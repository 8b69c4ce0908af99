import math

import numpy as np
import pytest

from gammasmear import hedge
from gammasmear.distfit import GammaParams
from gammasmear.pricing import OptionContract, call_price
from gammasmear.volest import MarketSeries


def series(prices):
    prices = np.asarray(prices, float)
    return MarketSeries(np.arange(prices.size), prices)


def test_build_portfolio_matches_explicit_form():
    p = GammaParams.from_vbar_delta(1e-4, 5.0)
    c = OptionContract(105.0, 100.0, 2e-4, 40.0)
    res = call_price(c, p)
    pi = hedge.build_portfolio(res.price, res.phi_plus, c.spot)
    assert pi == pytest.approx(hedge.portfolio_explicit(c, p), rel=1e-13)
    assert hedge.portfolio_explicit(c, p, tau=10.0, spot=99.0) == pytest.approx(
        -100.0 * math.exp(-2e-4 * 30.0) * call_price(c.replace(spot=99.0, t=30.0), p).phi_minus,
        rel=1e-15)
    with pytest.raises(ValueError):
        hedge.portfolio_explicit(c, p, tau=40.0)


def test_build_portfolio_broadcasts():
    out = hedge.build_portfolio([1.0, 2.0], 0.5, [4.0, 6.0])
    np.testing.assert_array_equal(out, [-1.0, -1.0])


def test_bs_limit_recovers_rate_exactly():
    r = 1.8e-4
    p = GammaParams.from_vbar_delta(1e-4, 1e-13)
    # deep in the money: Phi- stays near 1 and -Pi grows like exp(r tau)
    S = hedge.gamma_variance_prices(150.0, r, GammaParams.from_vbar_delta(4e-5, 1.0), 60, seed=3)[0]
    path = hedge.backtest(series(S), OptionContract(S[0], 100.0, r, 100.0), p)
    assert path.fit_ok
    assert path.fitted_rate == pytest.approx(r, rel=1e-3)
    assert np.nanmax(np.abs(path.rate_fluctuations)) < 1e-10


def test_gamma_variance_hedge_rate_close_to_riskless():
    r = 0.045 / 252
    p = GammaParams.from_vbar_delta(4.1e-5, 20.0)
    S = hedge.gamma_variance_prices(150.0, r, p, 80, seed=7)[0]
    path = hedge.backtest(series(S), OptionContract(S[0], 100.0, r, 120.0), p)
    assert path.fit_ok and path.excluded == 0
    assert abs(path.fitted_rate / r - 1.0) < 0.05
    assert abs(path.rate_fluctuation_stats["mean"]) < 0.05
    assert np.all(path.portfolio_values < 0)


def test_backtest_window_checks():
    p = GammaParams.from_vbar_delta(1e-4, 5.0)
    with pytest.raises(hedge.BacktestError):
        hedge.backtest(series([100.0, 101.0]), OptionContract(100, 100, 1e-4, 10.0), p)
    with pytest.raises(hedge.BacktestError):
        hedge.backtest(series(np.full(12, 100.0)), OptionContract(100, 100, 1e-4, 10.0), p)


def test_backtest_csv(tmp_path):
    p = GammaParams.from_vbar_delta(1e-4, 5.0)
    S = hedge.gamma_variance_prices(100.0, 1e-4, p, 10, seed=1)[0]
    path = hedge.backtest(series(S), OptionContract(S[0], 100.0, 1e-4, 30.0), p)
    out = tmp_path / "pf.csv"
    path.to_csv(out, "time in trading days")
    lines = out.read_text().splitlines()
    assert lines[0] == "# units: time in trading days"
    assert lines[1] == "date,option,delta,pi,implied_rate_fluct"
    assert len(lines) == 2 + S.size
    assert set(path.summary()) >= {"fitted_rate", "fit_ok", "excluded_days", "rate_fluctuation_stats"}


def test_fit_skipped_when_portfolio_not_negative():
    tau = np.arange(5.0)
    pi = -np.exp(0.01 * tau)
    pi[2] = 0.0
    slope, _, ok, bad = hedge._fit_rate(tau, pi)
    assert not ok and bad == 1


def test_synthetic_prices_shape_and_determinism():
    p = GammaParams.from_vbar_delta(1e-4, 5.0)
    a = hedge.gamma_variance_prices(50.0, 0.0, p, 20, n_paths=3, seed=11)
    b = hedge.gamma_variance_prices(50.0, 0.0, p, 20, n_paths=3, seed=11)
    assert a.shape == (3, 21)
    np.testing.assert_array_equal(a, b)
    assert np.all(a[:, 0] == 50.0)
    with pytest.raises(ValueError):
        hedge.gamma_variance_prices(50.0, 0.0, p, 0)
