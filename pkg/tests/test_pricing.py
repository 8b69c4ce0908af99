import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gammasmear import pricing as pr
from gammasmear.distfit import GammaParams
from _oracles import PHI, PHI_HALF
from conftest import rel

TIGHT = pr.SeriesControl(max_terms=200, tol=1e-15, round_limit=1e-8)


def gp(vbar, delta):
    return GammaParams.from_vbar_delta(vbar, delta)


@pytest.mark.parametrize("key", list(PHI))
def test_series_matches_reference(key):
    A, vbar, delta, t = key
    p = gp(vbar, delta)
    plus, minus = PHI[key]
    assert rel(pr.phi_plus_series(A, p, t, TIGHT), plus) < 1e-9
    assert rel(pr.phi_minus_series(A, p, t, TIGHT), minus) < 1e-9


@pytest.mark.parametrize("key", list(PHI))
def test_quadrature_matches_reference(key):
    A, vbar, delta, t = key
    p = gp(vbar, delta)
    assert rel(pr.phi_quadrature(A, p, t, +1)[0], PHI[key][0]) < 1e-11
    assert rel(pr.phi_quadrature(A, p, t, -1)[0], PHI[key][1]) < 1e-11


@pytest.mark.parametrize("key", list(PHI_HALF))
def test_half_integer_matches_reference(key):
    A, vbar, delta, l = key
    p = gp(vbar, delta)
    assert rel(pr.phi_plus_half_integer(A, p, l, TIGHT), PHI_HALF[key][0]) < 1e-10
    assert rel(pr.phi_minus_half_integer(A, p, l, TIGHT), PHI_HALF[key][1]) < 1e-10


def test_printed_half_integer_form_disagrees():
    A, vbar, delta, l = (0.0953101798043249, 1e-4, 5.0, 1)
    printed = pr.phi_plus_half_integer_printed(A, gp(vbar, delta), l)
    assert abs(printed - PHI_HALF[(A, vbar, delta, l)][0]) > 1e-3


def test_pole_guard():
    p = gp(1e-4, 5.0)
    with pytest.raises(pr.PoleProximityError):
        pr.phi_plus_series(0.05, p, 2.5 * 5.0 + 1e-9)
    # the price path switches branch instead of failing
    res = pr.call_price(pr.OptionContract(100, 95, 1e-4, 2.5 * 5.0), p)
    assert res.branch == "half-integer-series"


def test_divergence_reported_with_partial_sums():
    p = gp(1e-3, 0.5)
    with pytest.raises(pr.SeriesDivergenceError) as info:
        pr.phi_plus_series(0.3, p, 4.0, pr.SeriesControl(max_terms=3, fallback=False))
    assert info.value.terms == 3
    assert len(info.value.partial) == 3


def test_fallback_to_quadrature_is_labelled():
    c = pr.OptionContract(100, 100 * math.exp(0.25), 0.0, 20.0)
    res = pr.call_price(c, gp(1e-4, 5.0), pr.SeriesControl(max_terms=3))
    assert res.branch == "quadrature"
    assert "fallback_reason" in res.diagnostics
    ref = pr.price_quadrature(c, gp(1e-4, 5.0))
    assert res.price == pytest.approx(ref.price, rel=1e-12)


def test_bs_limit_branch():
    c = pr.OptionContract(100, 100, 1e-4, 30.0)
    res = pr.call_price(c, gp(1e-4, 1e-13))
    assert res.branch == "bs-limit"
    assert res.price == pytest.approx(pr.bs_price(c, 1e-4).price, rel=1e-15)


def test_black_scholes_known_value():
    # S = 100, K = 100, sigma^2 t = 0.04, r t = 0.05: textbook 10.4506
    c = pr.OptionContract(100, 100, 0.05, 1.0)
    assert pr.bs_price(c, 0.04).price == pytest.approx(10.450583572185565, rel=1e-12)


def test_contract_validation():
    with pytest.raises(ValueError):
        pr.OptionContract(-1, 100, 0.0, 1.0)
    with pytest.raises(ValueError):
        pr.OptionContract(1, 100, 0.0, 0.0)
    with pytest.raises(ValueError):
        pr.OptionContract(1, 100, 0.0, 1.0, "straddle")


@settings(max_examples=40, deadline=None)
@given(S=st.floats(60, 160), t=st.floats(3, 120), delta=st.floats(0.5, 40))
def test_put_call_parity(S, t, delta):
    c = pr.OptionContract(S, 100.0, 2e-4, t)
    p = gp(1e-4, delta)
    call, put = pr.call_price(c, p), pr.put_price(c, p)
    assert abs(put.price - (call.price - S + 100.0 * c.discount)) < 1e-12 * 100.0


@settings(max_examples=30, deadline=None)
@given(S=st.floats(70, 140), t=st.floats(3, 90), delta=st.floats(0.5, 30))
def test_price_bounds_and_monotonic_in_spot(S, t, delta):
    p = gp(1e-4, delta)
    c = pr.OptionContract(S, 100.0, 2e-4, t)
    res = pr.call_price(c, p)
    assert max(0.0, S - 100.0 * c.discount) - 1e-10 <= res.price <= S
    assert 0.0 <= res.phi_minus <= res.phi_plus <= 1.0 + 1e-12
    up = pr.call_price(c.replace(spot=S * 1.01), p).price
    assert up >= res.price


def test_delta_matches_finite_difference():
    p = gp(1e-4, 5.0)
    for S in (85.0, 100.0, 118.0):
        c = pr.OptionContract(S, 100.0, 1e-4, 37.3)
        assert abs(pr.delta_hedge(c, p) - pr.delta_finite_difference(c, p)) < 1e-6


def test_moneyness_and_odd_moments():
    c = pr.OptionContract(110, 100, 0.0, 20.0)
    assert pr.moneyness(c, 1e-4) == pytest.approx(math.log(1.1) / math.sqrt(2e-3))
    p = gp(1e-4, 5.0)  # t/delta = 4
    assert pr.moneyness_odd_moments(c, p, 4) == math.inf
    # n = 0: <|A|/sqrt(W)> = |A| sqrt(mu) Gamma(k - 1/2)/Gamma(k)
    k, mu = 4.0, p.mu
    ref = abs(c.A) * math.sqrt(mu) * math.gamma(k - 0.5) / math.gamma(k)
    assert pr.moneyness_odd_moments(c, p, 0) == pytest.approx(ref, rel=1e-13)


def test_calibrate_round_trip():
    true = gp(1e-4, 5.0)
    quotes = []
    for S in (90.0, 100.0, 110.0):
        for t in (10.0, 40.0):
            c = pr.OptionContract(S, 100.0, 1e-4, t)
            quotes.append((c, pr.call_price(c, true).price))
    res = pr.calibrate(quotes, gp(1.3e-4, 3.0))
    assert res.converged
    assert res.params.delta == pytest.approx(5.0, rel=1e-3)
    assert res.params.mu == pytest.approx(true.mu, rel=1e-3)
    with pytest.raises(ValueError):
        pr.calibrate(quotes[:1], true)


def test_price_result_serialises():
    res = pr.call_price(pr.OptionContract(100, 100, 1e-4, 20.0), gp(1e-4, 5.0))
    d = res.to_dict()
    assert set(d) >= {"price", "phi_plus", "phi_minus", "delta", "branch", "terms_used"}
    assert res.branch in pr.BRANCHES
