"""European option prices when the variance is Gamma distributed.

Write ``W`` for the variance integrated to expiry; it is Gamma with shape
``k = t/delta`` and rate ``mu``. The call price keeps the Black-Scholes form
``S Phi+ - e^{-r t} E Phi-``, where ``Phi+-`` are Gamma averages of the
normal CDF at ``+-sqrt(W)/2 + A/sqrt(W)``, with ``A = ln(S/E) + r t``.

``Phi+-`` come from a convergent series in confluent hypergeometric
functions. At half-integer ``k`` the series has cancelling poles, and a
separate logarithmic form is used there. A quadrature over the Gamma law is
kept as the reference and as the fallback.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize

from . import kernels, specfun
from .distfit import GammaParams
from .quadrature import gamma_expectation

BRANCHES = ("regular-series", "half-integer-series", "quadrature", "bs-limit")
BS_LIMIT_RATIO = 1e-12


class PricingError(ArithmeticError):
    """Base class for pricing failures."""


class PoleProximityError(PricingError, ValueError):
    """``t/delta`` lies within the guard band of a half-integer."""


class SeriesDivergenceError(PricingError):
    """The series failed its convergence or rounding diagnostics."""

    def __init__(self, message: str, partial: tuple = (), terms: int = 0,
                 trunc_error: float = math.nan, round_error: float = math.nan):
        super().__init__(message)
        self.partial = partial
        self.terms = terms
        self.trunc_error = trunc_error
        self.round_error = round_error


@dataclass(frozen=True)
class OptionContract:
    """European option. ``r_W`` is per unit time and ``t`` is time to expiry in the same units."""

    spot: float
    strike: float
    r_W: float
    t: float
    kind: str = "call"

    def __post_init__(self):
        if not (self.spot > 0 and math.isfinite(self.spot)):
            raise ValueError(f"spot must be > 0, got {self.spot}")
        if not (self.strike > 0 and math.isfinite(self.strike)):
            raise ValueError(f"strike must be > 0, got {self.strike}")
        if not (self.t > 0 and math.isfinite(self.t)):
            raise ValueError(f"time to expiry must be > 0, got {self.t}")
        if not math.isfinite(self.r_W):
            raise ValueError("r_W must be finite")
        if self.kind not in ("call", "put"):
            raise ValueError(f"kind must be 'call' or 'put', got {self.kind!r}")

    @property
    def x_E(self) -> float:
        return math.log(self.strike)

    @property
    def A(self) -> float:
        """Forward log-moneyness ``ln(S/E) + r t``."""
        return math.log(self.spot / self.strike) + self.r_W * self.t

    @property
    def discount(self) -> float:
        return math.exp(-self.r_W * self.t)

    def replace(self, **kw) -> "OptionContract":
        return replace(self, **kw)


@dataclass(frozen=True)
class SeriesControl:
    max_terms: int = 25
    tol: float = 1e-10
    pole_eps: float = 1e-6
    round_limit: float = 1e-10  # largest acceptable rounding estimate on Phi
    fallback: bool = True

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not (self.tol > 0 and self.pole_eps > 0 and self.round_limit > 0):
            raise ValueError("tol, pole_eps and round_limit must be > 0")


@dataclass(frozen=True)
class PhiResult:
    value: float
    branch: str
    terms_used: int = 0
    trunc_error: float = 0.0
    round_error: float = 0.0
    parts: tuple = ()


@dataclass(frozen=True)
class PriceResult:
    price: float
    phi_plus: float
    phi_minus: float
    delta: float
    branch: str
    terms_used: int
    trunc_error: float
    kind: str = "call"
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- Black-Scholes

def bs_phis(A: float, v: float, t: float) -> tuple[float, float]:
    """``(Phi(y+), Phi(y-))`` with ``y+- = (A +- v t/2)/sqrt(v t)``."""
    s = math.sqrt(v * t)
    return specfun.norm_cdf(A / s + 0.5 * s), specfun.norm_cdf(A / s - 0.5 * s)


def _assemble(c: OptionContract, pp: float, pm: float, branch: str, terms: int,
              trunc: float, diag: dict | None = None) -> PriceResult:
    K = c.strike * c.discount
    if c.kind == "call":
        price = c.spot * pp - K * pm
        delta = pp
    else:
        price = K * (1.0 - pm) - c.spot * (1.0 - pp)
        delta = pp - 1.0
    return PriceResult(price, pp, pm, delta, branch, terms, trunc, c.kind, diag or {})


def bs_price(c: OptionContract, v: float) -> PriceResult:
    """Black-Scholes price at constant variance ``v`` per unit time."""
    if not v > 0:
        raise ValueError(f"variance must be > 0, got {v}")
    pp, pm = bs_phis(c.A, v, c.t)
    return _assemble(c, pp, pm, "bs-limit", 0, 0.0, {"variance": v})


# ------------------------------------------------------------------- quadrature

def phi_quadrature(A: float, p: GammaParams, t: float, sign: int = +1,
                   epsabs: float = 1e-13, epsrel: float = 1e-11) -> tuple[float, float]:
    """``E[Phi(sign sqrt(W)/2 + A/sqrt(W))]`` by quadrature; ``(value, abs_err)``."""
    mu = p.mu
    lim0 = 1.0 if A > 0 else (0.0 if A < 0 else 0.5)

    def g(s):
        if s <= 0.0:
            return lim0
        w = math.sqrt(s / mu)
        return specfun.norm_cdf(sign * 0.5 * w + A / w)

    return gamma_expectation(g, t * p.nu, epsabs=epsabs, epsrel=epsrel)


def price_quadrature(c: OptionContract, p: GammaParams, epsabs: float = 1e-13,
                     epsrel: float = 1e-11) -> PriceResult:
    """Gamma average of Black-Scholes prices by adaptive quadrature."""
    A = c.A
    pp, ep = phi_quadrature(A, p, c.t, +1, epsabs, epsrel)
    pm, em = phi_quadrature(A, p, c.t, -1, epsabs, epsrel)
    err = c.spot * ep + c.strike * c.discount * em
    return _assemble(c, pp, pm, "quadrature", 0, err, {"phi_plus_err": ep, "phi_minus_err": em})


# ----------------------------------------------------------------------- series

def _half_integer_index(k: float, pole_eps: float) -> int | None:
    l = round(k - 0.5)
    if l >= 0 and abs(k - (l + 0.5)) < pole_eps:
        return int(l)
    return None


def _phi_regular(A: float, p: GammaParams, t: float, ctl: SeriesControl, sign: int) -> PhiResult:
    k = t * p.nu
    if _half_integer_index(k, ctl.pole_eps) is not None:
        raise PoleProximityError(
            f"t/delta = {k} is within {ctl.pole_eps} of a half-integer; use the half-integer branch")
    vd = p.vbar * p.delta
    z = -A if sign > 0 else A
    s1, s2, s3, n, trunc, rnd, ok = kernels.phi_sums(A, vd, k, z, ctl.tol, ctl.max_terms)
    val = 0.5 * (1.0 + sign * s1 + s2 + s3)
    res = PhiResult(val, "regular-series", n, trunc, rnd, (s1, s2, s3))
    _check(res, ok, ctl)
    return res


def _phi_half(A: float, p: GammaParams, l: int, ctl: SeriesControl, sign: int) -> PhiResult:
    if l < 0:
        raise ValueError("l must be >= 0")
    vd = p.vbar * p.delta
    z = -A if sign > 0 else A
    s1, s2, tail, n, trunc, rnd, ok = kernels.half_sums(A, vd, l, z, ctl.tol, ctl.max_terms)
    val = 0.5 * (1.0 + sign * s1 + s2 + tail)
    res = PhiResult(val, "half-integer-series", n, trunc, rnd, (s1, s2, tail))
    _check(res, ok, ctl)
    return res


def _check(res: PhiResult, ok: bool, ctl: SeriesControl) -> None:
    bad = None
    if not ok:
        bad = f"no convergence within {ctl.max_terms} terms"
    elif not math.isfinite(res.value) or res.round_error > ctl.round_limit:
        bad = f"rounding estimate {res.round_error:.3g} exceeds {ctl.round_limit:.3g}"
    elif not (-ctl.round_limit <= res.value <= 1.0 + ctl.round_limit):
        bad = f"value {res.value} outside [0, 1]"
    if bad:
        raise SeriesDivergenceError(bad, res.parts, res.terms_used, res.trunc_error, res.round_error)


def phi_plus_series(A: float, p: GammaParams, t: float, ctl: SeriesControl | None = None) -> float:
    """Spot-leg probability ``Phi+`` by the hypergeometric series.

    Raises :class:`PoleProximityError` near half-integer ``t/delta`` and
    :class:`SeriesDivergenceError` when the diagnostics fail.
    """
    return _phi_regular(A, p, t, ctl or SeriesControl(), +1).value


def phi_minus_series(A: float, p: GammaParams, t: float, ctl: SeriesControl | None = None) -> float:
    """Strike-leg probability ``Phi-`` by the hypergeometric series."""
    return _phi_regular(A, p, t, ctl or SeriesControl(), -1).value


def phi_series_detail(A: float, p: GammaParams, t: float, ctl: SeriesControl | None = None,
                      sign: int = +1) -> PhiResult:
    """Like :func:`phi_plus_series` / :func:`phi_minus_series` with diagnostics."""
    return _phi_regular(A, p, t, ctl or SeriesControl(), sign)


def phi_plus_half_integer(A: float, p: GammaParams, l: int,
                          ctl: SeriesControl | None = None) -> float:
    """``Phi+`` at ``t = (l + 1/2) delta``.

    The second and third sums of the regular series have cancelling poles
    here. Their limit keeps the first ``l`` terms of the second sum and
    adds the tail
    ``sgn(A) (-1)^l / (pi Gamma(l+1/2)) sum_m X^(n+1/2) Gamma(n+1/2) / ((2n+1)! m!)
    [M_n (psi(m+1) - ln X - psi(n+1/2) + 2 psi(2n+2)) - dM_n]``.
    Here ``n = l + m``, ``X = 2A^2/(vbar delta)``, ``M_n = 1F1(n+1/2; 2n+2; -A)``,
    and ``dM_n`` is the derivative of ``M`` along ``(da, db) = (1, 2)``.
    """
    return _phi_half(A, p, l, ctl or SeriesControl(), +1).value


def phi_minus_half_integer(A: float, p: GammaParams, l: int,
                           ctl: SeriesControl | None = None) -> float:
    """``Phi-`` at ``t = (l + 1/2) delta`` (Kummer argument ``+A``)."""
    return _phi_half(A, p, l, ctl or SeriesControl(), -1).value


def phi_plus_half_integer_printed(A: float, p: GammaParams, l: int, n_terms: int = 60) -> float:
    """The half-integer expansion with digamma-pair coefficients
    ``[psi(n-l+1) + psi(n+1)] / (Gamma(n) Gamma(n+l-1))``.

    Kept for comparison only: it does not reproduce the Gamma average (see
    the tests); :func:`phi_plus_half_integer` is the working form. Terms
    where ``Gamma(n)`` or ``Gamma(n+l-1)`` has a pole are exact zeros.
    """
    k = l + 0.5
    vd = p.vbar * p.delta
    s1 = 0.0
    for n in range(n_terms):
        s1 += (specfun.pochhammer(k, n + 0.5) * specfun.pochhammer(0.5, n)
               / math.factorial(2 * n + 1) * (-vd / 2) ** n
               * kernels.hyp1f1(n + 0.5, 2 * n + 2.0, -A, 1e-17, 2000)[0])
    s1 *= math.sqrt(vd / (2 * math.pi))
    s2 = 0.0
    for n in range(l):
        s2 += (specfun.pochhammer(k, -n - 0.5) * specfun.pochhammer(0.5, n)
               / math.factorial(2 * n + 1) * (-2 * A * A / vd) ** n
               * kernels.hyp1f1(n + 0.5, 2 * n + 2.0, -A, 1e-17, 2000)[0])
    s2 *= 2 * math.sqrt(A * A / (2 * math.pi * vd))
    s3 = 0.0
    for n in range(l, l + n_terms):
        if n <= 0 or n + l - 1 <= 0:
            continue
        coef = (specfun.digamma(n - l + 1) + specfun.digamma(n + 1)) / (
            math.gamma(n) * math.gamma(n + l - 1))
        s3 += coef * (A * A / vd) ** n * kernels.hyp1f1(n + 0.5, 2 * n + 2.0, -A, 1e-17, 2000)[0]
    s3 *= (-1) ** l / math.gamma(l + 0.5) * math.sqrt(A * A / (2 * math.pi * vd))
    return 0.5 * (1 + s1 + s2 + s3)


# ----------------------------------------------------------------------- prices

def _phis(c: OptionContract, p: GammaParams, ctl: SeriesControl):
    k = c.t * p.nu
    if p.delta / c.t < BS_LIMIT_RATIO:
        pp, pm = bs_phis(c.A, p.vbar, c.t)
        return pp, pm, "bs-limit", 0, 0.0, {"t_over_delta": k}
    l = _half_integer_index(k, ctl.pole_eps)
    diag: dict = {"t_over_delta": k}
    try:
        if l is not None:
            rp = _phi_half(c.A, p, l, ctl, +1)
            rm = _phi_half(c.A, p, l, ctl, -1)
            diag["evaluated_at_half_integer"] = l + 0.5
        else:
            rp = _phi_regular(c.A, p, c.t, ctl, +1)
            rm = _phi_regular(c.A, p, c.t, ctl, -1)
    except SeriesDivergenceError as exc:
        if not ctl.fallback:
            raise
        diag["fallback_reason"] = str(exc)
        pp, ep = phi_quadrature(c.A, p, c.t, +1)
        pm, em = phi_quadrature(c.A, p, c.t, -1)
        return pp, pm, "quadrature", 0, max(ep, em), diag
    diag["round_error"] = max(rp.round_error, rm.round_error)
    return (rp.value, rm.value, rp.branch, max(rp.terms_used, rm.terms_used),
            max(rp.trunc_error, rm.trunc_error), diag)


def option_price(c: OptionContract, p: GammaParams, ctl: SeriesControl | None = None) -> PriceResult:
    """Price of ``c`` (call or put according to ``c.kind``)."""
    pp, pm, branch, n, trunc, diag = _phis(c, p, ctl or SeriesControl())
    return _assemble(c, pp, pm, branch, n, trunc, diag)


def call_price(c: OptionContract, p: GammaParams, ctl: SeriesControl | None = None) -> PriceResult:
    return option_price(c.replace(kind="call"), p, ctl)


def put_price(c: OptionContract, p: GammaParams, ctl: SeriesControl | None = None) -> PriceResult:
    return option_price(c.replace(kind="put"), p, ctl)


def delta_hedge(c: OptionContract, p: GammaParams, ctl: SeriesControl | None = None) -> float:
    """Hedge ratio of the call, ``Phi+``."""
    return call_price(c, p, ctl).phi_plus


def delta_finite_difference(c: OptionContract, p: GammaParams, ctl: SeriesControl | None = None,
                            rel_step: float = 1e-5) -> float:
    """Central difference of the call price in the spot (check channel)."""
    h = rel_step * c.spot
    up = call_price(c.replace(spot=c.spot + h), p, ctl).price
    dn = call_price(c.replace(spot=c.spot - h), p, ctl).price
    return (up - dn) / (2.0 * h)


def moneyness(c: OptionContract, v: float) -> float:
    """Forward moneyness in units of the Black-Scholes spread, ``A/sqrt(v t)``."""
    if not v > 0:
        raise ValueError("variance must be > 0")
    return c.A / math.sqrt(v * c.t)


def moneyness_odd_moments(c: OptionContract, p: GammaParams, n: int) -> float:
    """``<|m|^(2n+1)>/(2n+1)!`` over the Gamma-distributed variance.

    Infinite when ``t/delta <= n + 1/2``, where the moment diverges.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    A = c.A
    if A == 0.0:
        return 0.0
    k = c.t * p.nu
    if k <= n + 0.5:
        return math.inf
    ratio = A * A / (p.delta * p.vbar)
    return ratio**n * math.sqrt(ratio) * specfun.pochhammer(k, -n - 0.5) / math.factorial(2 * n + 1)


# -------------------------------------------------------------------- calibrate

@dataclass(frozen=True)
class CalibrationResult:
    params: GammaParams
    chi2: float
    residuals: list
    converged: bool
    n_evaluations: int
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "chi2": self.chi2,
            "residuals": list(self.residuals),
            "converged": self.converged,
            "n_evaluations": self.n_evaluations,
            "message": self.message,
        }


def calibrate(quotes, init: GammaParams, ctl: SeriesControl | None = None,
              restarts: int = 3, xatol: float = 1e-9, fatol: float = 1e-16) -> CalibrationResult:
    """Least-squares fit of ``(delta, mu)`` to observed option prices.

    ``quotes`` is a sequence of ``(OptionContract, observed_price)``. The
    search is a Nelder-Mead simplex in ``(ln delta, ln mu)``. After the
    first run it restarts from the current best point with a perturbed
    simplex. Results are deterministic for given inputs.
    """
    quotes = list(quotes)
    if len(quotes) < 2:
        raise ValueError("calibration needs at least two quotes")
    ctl = ctl or SeriesControl(max_terms=80)
    obs = np.array([q[1] for q in quotes], dtype=float)
    scale = max(float(np.mean(np.abs(obs))), 1e-300)
    n_eval = 0

    def model(x):
        gp = GammaParams(mu=math.exp(x[1]), nu=math.exp(-x[0]))
        return np.array([option_price(cq, gp, ctl).price for cq, _ in quotes])

    def objective(x):
        nonlocal n_eval
        n_eval += 1
        if not np.all(np.abs(x) < 700):
            return math.inf
        r = (model(x) - obs) / scale
        return float(r @ r)

    x = np.array([math.log(init.delta), math.log(init.mu)])
    best = None
    converged = False
    msg = ""
    offsets = [(0.0, 0.0), (0.3, -0.3), (-0.3, 0.3)]
    for i in range(max(1, restarts)):
        dx = np.array(offsets[i % len(offsets)])
        x0 = x + dx
        simplex = np.array([x0, x0 + [0.2, 0.0], x0 + [0.0, 0.2]])
        res = optimize.minimize(objective, x0, method="Nelder-Mead",
                                options={"initial_simplex": simplex, "xatol": xatol,
                                         "fatol": fatol, "maxiter": 4000, "maxfev": 8000})
        if best is None or res.fun < best.fun:
            best = res
            x = res.x
        converged = converged or bool(res.success)
        msg = str(res.message)
    gp = GammaParams(mu=math.exp(best.x[1]), nu=math.exp(-best.x[0]))
    resid = model(best.x) - obs
    return CalibrationResult(gp, float(resid @ resid), resid.tolist(), converged, n_eval, msg)
