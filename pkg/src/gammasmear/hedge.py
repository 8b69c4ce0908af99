"""Delta-hedged portfolios ``Pi = O - Delta S`` and their backtest.

For a call hedged with ``Delta = Phi+`` the stock legs cancel and
``Pi(tau) = -E e^{-r (t_b - tau)} Phi-(tau)``. The backtest fits an
exponential growth rate to ``-Pi`` and turns the gap between ``Phi-`` and
its Black-Scholes value at the mean variance into a per-day rate
fluctuation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .distfit import GammaParams
from .pricing import OptionContract, SeriesControl, bs_phis, call_price
from .volest import MarketSeries


class BacktestError(ValueError):
    """The price series does not fit the contract window."""


def build_portfolio(option_value, delta, spot):
    """``Pi = O - Delta S`` (elementwise for arrays)."""
    o, d, s = np.broadcast_arrays(np.asarray(option_value, float), np.asarray(delta, float),
                                  np.asarray(spot, float))
    pi = o - d * s
    return float(pi) if pi.ndim == 0 else pi


def portfolio_explicit(c: OptionContract, p: GammaParams, ctl: SeriesControl | None = None,
                       tau: float = 0.0, spot: float | None = None) -> float:
    """``-E e^{-r (t_b - tau)} Phi-`` at time ``tau``.

    ``c.t`` is the expiry ``t_b`` measured from ``tau = 0``; ``spot``
    (default ``c.spot``) is the price at ``tau``.
    """
    if not tau < c.t:
        raise ValueError(f"tau = {tau} must be before expiry {c.t}")
    cc = c.replace(spot=c.spot if spot is None else spot, t=c.t - tau, kind="call")
    res = call_price(cc, p, ctl)
    return -c.strike * math.exp(-c.r_W * (c.t - tau)) * res.phi_minus


@dataclass
class PortfolioPath:
    times: np.ndarray
    spots: np.ndarray
    option_values: np.ndarray
    deltas: np.ndarray
    portfolio_values: np.ndarray
    rate_fluctuations: np.ndarray
    fitted_rate: float = math.nan
    fit_intercept: float = math.nan
    fit_ok: bool = False
    excluded: int = 0
    rate_fluctuation_stats: dict = field(default_factory=dict)
    message: str = ""
    dates: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.times)
        for name in ("spots", "option_values", "deltas", "portfolio_values", "rate_fluctuations"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has a different length from times")

    def summary(self) -> dict:
        return {
            "n_days": int(len(self.times)),
            "fitted_rate": self.fitted_rate,
            "fit_intercept": self.fit_intercept,
            "fit_ok": self.fit_ok,
            "excluded_days": self.excluded,
            "rate_fluctuation_stats": dict(self.rate_fluctuation_stats),
            "message": self.message,
        }

    def to_csv(self, path, units: str | None = None) -> None:
        """Columns ``date, option, delta, pi, implied_rate_fluct``.

        ``date`` is the series timestamp, or ``tau`` when none is attached.
        """
        with open(path, "w", newline="") as fh:
            if units:
                fh.write(f"# units: {units}\n")
            w = csv.writer(fh)
            w.writerow(["date", "option", "delta", "pi", "implied_rate_fluct"])
            dates = self.dates if self.dates is not None else self.times
            for d, *row in zip(dates, self.option_values, self.deltas,
                               self.portfolio_values, self.rate_fluctuations):
                w.writerow([str(d)] + [repr(float(x)) for x in row])


def _fit_rate(tau: np.ndarray, pi: np.ndarray):
    good = -pi > 0
    n_bad = int((~good).sum())
    if good.sum() < 2:
        return math.nan, math.nan, False, n_bad
    slope, intercept = np.polyfit(tau[good], np.log(-pi[good]), 1)
    return float(slope), float(intercept), n_bad == 0, n_bad


def backtest(series: MarketSeries, c: OptionContract, p: GammaParams,
             ctl: SeriesControl | None = None) -> PortfolioPath:
    """Rebalance a short-stock / long-call position once per sample.

    Sample ``i`` sits at ``tau = i * series.sampling_interval``; the contract
    expires at ``t_b = c.t`` and the series must end before it. Each day
    records ``O``, ``Delta = Phi+`` and ``Pi = O - Delta S``.
    ``log(-Pi) = c0 + r_hat tau`` is fitted by least squares. If ``Pi >= 0``
    on some day, the raw path is returned without a fit, and the number of
    such days goes in ``excluded``. The rate fluctuation solves
    ``Pi = -E Phi(y-_vbar) e^{-(t_b - tau)(r + dr)}`` for ``dr``.
    """
    S = series.prices
    tau = np.arange(S.size) * float(series.sampling_interval)
    if S.size < 3:
        raise BacktestError("a backtest needs at least 3 samples")
    if tau[-1] >= c.t:
        raise BacktestError(
            f"the series runs to tau = {tau[-1]} but the contract expires at {c.t}")
    O = np.empty(S.size)
    D = np.empty(S.size)
    pm = np.empty(S.size)
    dr = np.empty(S.size)
    for i, (s, ta) in enumerate(zip(S, tau)):
        rem = c.t - ta
        res = call_price(c.replace(spot=float(s), t=rem, kind="call"), p, ctl)
        O[i], D[i], pm[i] = res.price, res.phi_plus, res.phi_minus
        _, pm_bs = bs_phis(math.log(s / c.strike) + c.r_W * rem, p.vbar, rem)
        dr[i] = -math.log(pm[i] / pm_bs) / rem if pm[i] > 0 and pm_bs > 0 else math.nan
    pi = build_portfolio(O, D, S)
    slope, intercept, ok, n_bad = _fit_rate(tau, pi)
    rel = dr / c.r_W if c.r_W != 0 else np.full_like(dr, math.nan)
    finite = rel[np.isfinite(rel)]
    stats = {
        "mean": float(finite.mean()) if finite.size else math.nan,
        "stderr": float(finite.std(ddof=1) / math.sqrt(finite.size)) if finite.size > 1 else math.nan,
        "n": int(finite.size),
    }
    msg = "" if ok else f"portfolio non-negative on {n_bad} day(s); exponential fit skipped"
    if not ok:
        slope = intercept = math.nan
    return PortfolioPath(tau, S.copy(), O, D, pi, dr, slope, intercept, ok, n_bad, stats, msg,
                         dates=np.asarray(series.timestamps))


def gamma_variance_prices(s0: float, r_W: float, p: GammaParams, n_days: int,
                          n_paths: int = 1, seed: int = 0) -> np.ndarray:
    """Synthetic daily closes whose one-day variance is Gamma(mu, nu).

    The daily log return is ``r - w/2 + sqrt(w) Z`` with ``w ~ Gamma(nu, mu)``.
    Over ``t`` days the variance adds up to Gamma(t nu, mu), which is the
    pricing law. Returns an array ``(n_paths, n_days + 1)`` that starts at ``s0``.
    """
    if n_days < 1 or n_paths < 1:
        raise ValueError("n_days and n_paths must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    w = rng.gamma(p.nu, 1.0 / p.mu, size=(n_paths, n_days))
    z = rng.standard_normal((n_paths, n_days))
    logs = np.cumsum(r_W - 0.5 * w + np.sqrt(w) * z, axis=1)
    return s0 * np.exp(np.concatenate([np.zeros((n_paths, 1)), logs], axis=1))
