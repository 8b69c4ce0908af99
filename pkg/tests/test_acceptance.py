"""Acceptance gate: one test and one PASS/FAIL line per criterion."""

import math
import time

import numpy as np
import pytest

from gammasmear import distfit, hedge, measure, sdesim
from gammasmear.distfit import GammaParams
from gammasmear.pricing import (OptionContract, PoleProximityError, SeriesControl,
                                SeriesDivergenceError, bs_price, calibrate, call_price,
                                delta_finite_difference, delta_hedge, phi_plus_half_integer,
                                phi_plus_series, phi_quadrature, phi_series_detail, put_price)
from gammasmear.volest import MarketSeries

pytestmark = pytest.mark.acceptance

TIGHT = SeriesControl(max_terms=200, tol=1e-15, round_limit=1e-8)
VBAR = 1e-4


def contract_grid():
    # 20 contracts within about 2.5 moneyness units at VBAR
    return [OptionContract(S, 100.0, 1e-4, t)
            for S in (90.0, 95.0, 100.0, 105.0, 110.0) for t in (20.0, 40.0, 80.0, 160.0)]


def test_01_series_matches_quadrature(report):
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    worst, points, failures = 0.0, 0, []
    while points < 220:
        delta = 10 ** rng.uniform(-2, 2)
        vd = 10 ** rng.uniform(-4, 0)
        k = rng.uniform(0.7, 30.0)
        if abs(k - math.floor(k) - 0.5) < 1e-3:
            continue  # half-integer guard band
        p = GammaParams.from_vbar_delta(vd / delta, delta)
        t = k * delta
        A = rng.uniform(-3, 3) * math.sqrt(p.vbar * t)
        points += 1
        for sign in (+1, -1):
            ref = phi_quadrature(A, p, t, sign)[0]
            try:
                val = phi_series_detail(A, p, t, TIGHT, sign).value
            except (SeriesDivergenceError, PoleProximityError) as exc:
                failures.append((k, vd, A, sign, str(exc)))
                continue
            worst = max(worst, abs(val - ref) / ref)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and not failures and elapsed <= 120
    report("1", ok, f"{points} points x 2 legs, worst rel {worst:.2e}, "
                    f"{len(failures)} series failures, {elapsed:.1f}s")


def test_02_black_scholes_limit(report):
    devs = {}
    for d in (1e-1, 1e-2, 1e-3):
        p = GammaParams.from_vbar_delta(VBAR, d)
        devs[d] = max(abs(call_price(c, p).price - bs_price(c, VBAR).price) / bs_price(c, VBAR).price
                      for c in contract_grid())
    monotone = devs[1e-1] > devs[1e-2] > devs[1e-3]
    ok = devs[1e-3] < 1e-3 and monotone
    report("2", ok, "max rel deviation " + ", ".join(f"delta={d:g}: {v:.2e}" for d, v in devs.items()))


def test_03_put_call_parity(report):
    worst = 0.0
    for d in (0.05, 1.0, 5.0, 30.0):
        p = GammaParams.from_vbar_delta(VBAR, d)
        for c in contract_grid():
            call, put = call_price(c, p).price, put_price(c, p).price
            worst = max(worst, abs(put - (call - c.spot + c.strike * c.discount)) / c.strike)
    report("3", worst < 1e-12, f"worst |parity gap|/E = {worst:.2e}")


def test_04_half_integer_continuity(report):
    p = GammaParams.from_vbar_delta(VBAR, 2.0)
    A = 0.02
    jump = oracle = 0.0
    for l in (0, 1, 2, 5):
        half = phi_plus_half_integer(A, p, l, TIGHT)
        for eps in (+1e-4, -1e-4):
            jump = max(jump, abs(phi_plus_series(A, p, (l + 0.5 + eps) * p.delta, TIGHT) - half))
        oracle = max(oracle, abs(half - phi_quadrature(A, p, (l + 0.5) * p.delta, +1)[0]))
    ok = jump < 1e-4 and oracle < 1e-6
    report("4", ok, f"max |Phi+(l+1/2 +- 1e-4) - Phi+_half| = {jump:.2e}, vs quadrature {oracle:.2e}")


def test_05_at_the_money_forward(report):
    worst = 0.0
    for d in (0.5, 5.0, 50.0):
        p = GammaParams.from_vbar_delta(VBAR, d)
        for t in (10.0, 40.0, 160.0):
            c = OptionContract(100.0 * math.exp(-1e-4 * t), 100.0, 1e-4, t)  # A = 0
            bs = bs_price(c, VBAR).price
            worst = max(worst, abs(call_price(c, p).price - bs) / bs)
    report("5", worst < 1e-10, f"worst rel |O_delta - O_BS| at A = 0: {worst:.2e}")


def _richardson(f, h):
    return (4.0 * f(h / 2) - f(h)) / 3.0


def test_06_cumulants_and_characteristic_time(report):
    errs = []
    for vbar, d in ((2e-4, 7.0), (1e-4, 69.43), (5e-3, 0.3)):
        gp = GammaParams.from_vbar_delta(vbar, d)
        K = lambda s: math.log(measure.mgf(s, gp))
        # G is a characteristic function: c2 = -K''(0), c4 = K''''(0)
        d2 = lambda h: -(K(h) - 2 * K(0) + K(-h)) / h**2
        d4 = lambda h: (K(2 * h) - 4 * K(h) + 6 * K(0) - 4 * K(-h) + K(-2 * h)) / h**4
        h = 0.03 * math.sqrt(gp.mu)  # balances truncation against roundoff
        c2, c4 = _richardson(d2, h), _richardson(d4, h)
        cum = measure.cumulants(gp)
        errs += [abs(c2 / cum.c[2] - 1), abs((c4 / c2**2) / cum.kappa4 - 1),
                 abs(cum.kappa4 - 3 * d) / (3 * d)]
    t_star, _ = measure.characteristic_time(GammaParams.from_vbar_delta(1e-4, 69.43))
    ok = max(errs) < 1e-5 and abs(t_star - 208.29) < 1e-9
    report("6", ok, f"worst rel cumulant error {max(errs):.2e}; t* = {t_star:.2f} for delta = 69.43")


def test_07_martingale_and_normalisation(report):
    mass = mart = ck = 0.0
    for vbar, d, r, t in ((1e-4, 5.0, 1e-4, 30.0), (1e-3, 1.0, 0.0, 0.3),
                          (2e-4, 20.0, 5e-4, 200.0), (1e-4, 0.5, 2e-4, 2.0)):
        p = measure.MeasureParams(GammaParams.from_vbar_delta(vbar, d), r, t)
        mass = max(mass, abs(measure.total_mass(p) - 1.0))
        mart = max(mart, measure.martingale_check(p))
    p = measure.MeasureParams(GammaParams.from_vbar_delta(1e-4, 5.0), 1e-4, 30.0)
    for split in (7.5, 15.0, 22.5):
        ck = max(ck, measure.chapman_kolmogorov_check(p, split))
    ok = mass < 1e-8 and mart < 1e-6 and ck < 1e-6
    report("7", ok, f"|mass-1| {mass:.2e}, |martingale-1| {mart:.2e}, CK deviation {ck:.2e}")


def test_08_delta_hedge_identity(report):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        d = 10 ** rng.uniform(-1, 1.5)
        p = GammaParams.from_vbar_delta(VBAR, d)
        t = rng.uniform(1.0, 30.0) * d
        S = 100.0 * math.exp(rng.uniform(-2, 2) * math.sqrt(VBAR * t))
        c = OptionContract(S, 100.0, 1e-4, t)
        worst = max(worst, abs(delta_hedge(c, p) - delta_finite_difference(c, p)))
    report("8", worst < 1e-6, f"worst |Delta - dO/dS| over 50 contracts: {worst:.2e}")


@pytest.mark.slow
def test_09_sde_stationary_law(report):
    start = time.perf_counter()
    cfg = sdesim.SdeConfig.linear(4.0, 4.0, dt=1e-3, horizon=1.0, n_paths=100_000, seed=2024)
    var = sdesim.simulate_variance(cfg)
    vol = sdesim.simulate_volatility(cfg)
    ks_v = sdesim.stationary_check(var, var.target(), "gamma").ks_distance
    ks_s = sdesim.stationary_check(vol, vol.target(), "chi").ks_distance
    elapsed = time.perf_counter() - start
    ok = ks_v < 0.01 and ks_s < 0.01 and elapsed <= 300
    report("9", ok, f"KS variance/Gamma {ks_v:.4f}, volatility/Chi {ks_s:.4f}, {elapsed:.0f}s")


def test_10_drift_correction_asymptotics(report):
    v = np.array([0.2, 0.5, 1.0, 2.0, 3.0])
    const = sdesim.drift_correction(v, 3.0, 2.0)
    a_zero = bool(np.all(const == 0.0))
    ts = np.geomspace(1e2, 1e4, 9)
    at = np.array([sdesim.drift_correction(v, 4.0 * t, 4.0 * t, dmu=4.0, dnu=4.0) * t for t in ts])
    bounded = bool(np.all(np.isfinite(at)) and np.max(np.abs(at)) < 10.0
                   and np.max(np.abs(at[-1] - at[0])) < 0.01)
    ratios = []
    for nu_t in (1e-4, 1e-5, 1e-6):
        t = nu_t / 4.0
        a = sdesim.drift_correction(v, 4.0 * t, 4.0 * t, dmu=4.0, dnu=4.0)
        ratios.append(a * (1.0 * t * 4.0) / (-v))  # a (vbar t nu) / (-v) with vbar = 1
    worst_small = float(np.max(np.abs(np.array(ratios) - 1.0)))
    ok = a_zero and bounded and worst_small < 0.05
    report("10", ok, f"a=0 for constant parameters: {a_zero}; max |a t| over [1e2, 1e4] "
                     f"{np.max(np.abs(at)):.3f} (bounded: {bounded}); small-t ratio "
                     f"range {np.min(ratios):.3g}..{np.max(ratios):.3g} (needs 1 +- 0.05)")


def test_11_fit_round_trips(report):
    true = GammaParams(4.0e4, 4.0)
    x = np.random.default_rng(11).gamma(true.nu, 1.0 / true.mu, 100_000)
    fit = distfit.compare_models(x)["gamma"].params
    fit_err = max(abs(fit.mu / true.mu - 1), abs(fit.nu / true.nu - 1))
    p = GammaParams.from_vbar_delta(1e-4, 5.0)
    quotes = [(c, call_price(c, p).price) for c in
              (OptionContract(S, 100.0, 1e-4, t) for S in (90.0, 100.0, 110.0) for t in (10.0, 40.0))]
    res = calibrate(quotes, GammaParams.from_vbar_delta(1.3e-4, 3.0))
    cal_err = max(abs(res.params.delta / p.delta - 1), abs(res.params.mu / p.mu - 1))
    ok = fit_err < 0.05 and cal_err < 1e-3 and res.converged
    report("11", ok, f"distfit rel error {fit_err:.2e}; calibrate rel error {cal_err:.2e}")


def test_12_synthetic_hedge_backtest(report):
    r = 0.045 / 252
    p = GammaParams.from_vbar_delta(4.1e-5, 69.43)
    paths = hedge.gamma_variance_prices(150.0, r, p, 199, n_paths=10, seed=12)
    rates, means, errs = [], [], []
    for S in paths:
        res = hedge.backtest(MarketSeries(np.arange(S.size), S), OptionContract(S[0], 100.0, r, 250.0), p)
        rates.append(res.fitted_rate)
        means.append(res.rate_fluctuation_stats["mean"])
        errs.append(res.rate_fluctuation_stats["stderr"])
    worst = max(abs(x / r - 1) for x in rates)
    ok = worst < 0.10 and all(np.isfinite(means))
    report("12", ok, f"fitted rate within {100 * worst:.2f}% of r over 10 paths; dr/r mean "
                     f"{np.mean(means):.4f} +- {np.mean(errs):.4f}")


def test_13_scaled_collapse(report):
    unit = GammaParams(2.0e4, 0.4)  # per-day parameters
    rng = np.random.default_rng(13)
    ks = {}
    for T in (300.0, 600.0, 900.0):
        x = rng.gamma(T * unit.nu, 1.0 / (T * unit.mu), 20_000)
        ks[T] = distfit.collapse_ks(x, T, unit)
    report("13", max(ks.values()) < 0.02, "KS " + ", ".join(f"T={T:g}: {v:.4f}" for T, v in ks.items()))
