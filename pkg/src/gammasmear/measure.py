"""Risk-neutral density of the log-return under Gamma-smeared variance.

Over a horizon ``t`` the integrated variance ``W`` is Gamma with shape
``k = t nu`` and rate ``mu``. Conditional on ``W``, the log-return is normal
with mean ``r t - W/2`` and variance ``W``. The mixture has a closed form
in terms of ``K_{k-1/2}``. From it this module also builds the MGF, the
cumulants, the characteristic times, the Edgeworth correction and a few
numerical consistency checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import specfun
from .distfit import GammaParams, SingularityError
from .quadrature import gamma_expectation

_LN_PI = math.log(math.pi)
_LN_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MeasureParams:
    """Per-unit-time Gamma parameters, riskless rate per unit time and horizon."""

    gamma_params: GammaParams
    r_W: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t > 0):
            raise ValueError(f"t must be > 0, got {self.t}")
        if not math.isfinite(self.r_W):
            raise ValueError("r_W must be finite")

    @property
    def shape(self) -> float:
        """Gamma shape ``k = t nu`` of the integrated variance."""
        return self.t * self.gamma_params.nu

    def r_x(self, v: float) -> float:
        """Drift of ``x = ln S`` per unit time at variance ``v`` (``r_W - v/2``)."""
        return self.r_W - 0.5 * v


@dataclass(frozen=True)
class CumulantSet:
    c: dict[int, float]
    kappa3: float = 0.0
    kappa4: float = 0.0
    identity: dict[int, tuple[float, float]] = field(default_factory=dict)


def _log_density_at(D: float, p: MeasureParams) -> float:
    gp = p.gamma_params
    k = p.shape
    c = math.sqrt(1.0 + 8.0 * gp.mu)
    base = k * math.log(2.0 * gp.mu) - 0.5 * _LN_PI - math.lgamma(k)
    order = k - 0.5
    z = 0.5 * abs(D) * c
    if D == 0.0 or (z < 1e-6 and order >= 1.0):
        if order <= 0.0:
            raise SingularityError(
                "density is infinite at dx = r t when t/delta <= 1/2")
        # K_nu(z) ~ Gamma(nu)/2 (2/z)^nu as z -> 0
        return base + math.lgamma(order) - math.log(2.0) + order * math.log(4.0 / (c * c))
    return (-0.5 * D + base + order * (math.log(abs(D)) - math.log(c))
            + specfun.log_bessel_k(order, z))


def measure_density(dx, p: MeasureParams, normalized: bool = True):
    """Density of the log-return ``dx = ln(S_t/S_0)`` (vectorised in ``dx``).

    ``normalized=True`` gives a probability density; ``False`` includes the
    discount factor ``exp(-r t)`` (total mass ``exp(-r t)``, and
    ``int exp(dx) P dx = 1``).
    """
    shift = 0.0 if normalized else -p.r_W * p.t
    arr = np.asarray(dx, dtype=float)
    D = arr - p.r_W * p.t
    out = np.array([math.exp(_log_density_at(float(d), p) + shift) for d in D.ravel()])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def log_measure_density(dx: float, p: MeasureParams, normalized: bool = True) -> float:
    """Natural log of :func:`measure_density` at a scalar ``dx``."""
    shift = 0.0 if normalized else -p.r_W * p.t
    return _log_density_at(float(dx) - p.r_W * p.t, p) + shift


def smeared_density(dx: float, p: MeasureParams) -> float:
    """The same density by quadrature over the Gamma law of ``W``."""
    gp = p.gamma_params
    D = dx - p.r_W * p.t

    def g(s):
        W = s / gp.mu
        if W <= 0.0:
            return 0.0
        return math.exp(-((D + 0.5 * W) ** 2) / (2.0 * W) - 0.5 * (_LN_2PI + math.log(W)))

    return gamma_expectation(g, p.shape, epsabs=1e-15, epsrel=1e-12)[0]


def driftless_density(y, gp: GammaParams, t: float):
    """Symmetric mixture ``E[N(y; 0, W)]`` with ``W ~ Gamma(t nu, mu)``."""
    k = t * gp.nu
    order = k - 0.5
    s2m = math.sqrt(2.0 * gp.mu)
    base = k * math.log(gp.mu) - math.lgamma(k) - 0.5 * _LN_2PI + math.log(2.0)

    def one(v):
        a = abs(v)
        if a == 0.0 or (a * s2m < 1e-6 and order >= 1.0):
            if order <= 0.0:
                raise SingularityError("driftless density is infinite at 0 when t/delta <= 1/2")
            return math.exp(base + math.lgamma(order) - math.log(2.0)
                            + order * math.log(2.0 / (s2m * s2m)))
        return math.exp(base + order * (math.log(a) - math.log(s2m))
                        + specfun.log_bessel_k(order, a * s2m))

    arr = np.asarray(y, dtype=float)
    out = np.array([one(float(v)) for v in arr.ravel()]).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def tail_asymptote(dx, p: MeasureParams):
    """Leading large-``|dx|`` behaviour, up to a constant factor."""
    c = math.sqrt(1.0 + 8.0 * p.gamma_params.mu)
    x = np.asarray(dx, dtype=float)
    out = np.exp(-0.5 * np.abs(x) * c - 0.5 * x) * np.abs(x) ** (p.shape - 1.0)
    return float(out) if out.ndim == 0 else out


def _scale(p: MeasureParams) -> tuple[float, float]:
    centre = p.r_W * p.t - 0.5 * p.t * p.gamma_params.vbar
    sd = math.sqrt(p.t * p.gamma_params.vbar)
    return centre, sd


def _integrate_dx(f, p: MeasureParams, epsabs=1e-12, epsrel=1e-11) -> float:
    centre, sd = _scale(p)
    peak = p.r_W * p.t
    # heavier-than-Gaussian tails: the decay length is 2/(c -/+ 1)
    c = math.sqrt(1.0 + 8.0 * p.gamma_params.mu)
    reach = max(60.0 * sd, 80.0 / (c - 1.0))
    pts = sorted({centre + m * sd for m in (-30, -10, -4, -1, 0, 1, 4, 10, 30)} | {peak})
    lo, hi = min(pts[0], centre - reach), max(pts[-1], centre + reach)
    total = 0.0
    edges = [lo] + pts + [hi]
    alpha = 2.0 * p.shape - 1.0
    for a, b in zip(edges[:-1], edges[1:]):
        if not b > a:
            continue
        if p.shape < 1.0 and (a == peak or b == peak):
            # |dx - r t|^(2k-1) behaviour at the peak goes into the weight
            g = lambda x: f(x) / abs(x - peak) ** alpha if x != peak else 0.0
            wvar = (alpha, 0.0) if a == peak else (0.0, alpha)
            total += integrate.quad(g, a, b, weight="alg", wvar=wvar,
                                    epsabs=epsabs, epsrel=epsrel, limit=400)[0]
        else:
            total += integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=400)[0]
    total += integrate.quad(f, -math.inf, lo, epsabs=epsabs, limit=200)[0]
    total += integrate.quad(f, hi, math.inf, epsabs=epsabs, limit=200)[0]
    return total


def total_mass(p: MeasureParams) -> float:
    """Numerical integral of :func:`measure_density` over the real line."""
    return _integrate_dx(lambda x: measure_density(x, p), p)


def mgf(pvar: float, gp: GammaParams, normalized: bool = False) -> float:
    """Transform of the driftless one-step return, ``E[exp(i p X)]``.

    As written the transform is ``2^(1/delta) mu^(1/2) / (p^2 + 2mu)^(1/delta)``.
    That prefactor does not make ``G(0) = 1``, so ``normalized=True`` returns
    ``G(p)/G(0) = (1 + p^2/(2 mu))^(-nu)``. Log-derivatives are the same for both.
    """
    if normalized:
        return (1.0 + pvar * pvar / (2.0 * gp.mu)) ** (-gp.nu)
    return 2.0 ** gp.nu * math.sqrt(gp.mu) / (pvar * pvar + 2.0 * gp.mu) ** gp.nu


def cumulants(gp: GammaParams, max_order: int = 8) -> CumulantSet:
    """Cumulants of the one-step driftless return.

    ``c_2n = (2n)!/(n 2^n) vbar^n delta^(n-1)``; odd orders vanish.
    ``identity[n]`` holds both sides of
    ``delta c_2n / (Gamma(n) 4^n) = (1/2)_n (vbar delta / 2)^n``.
    """
    if max_order < 2:
        raise ValueError("max_order must be >= 2")
    c: dict[int, float] = {}
    ident: dict[int, tuple[float, float]] = {}
    vb, d = gp.vbar, gp.delta
    for order in range(1, max_order + 1):
        if order % 2:
            c[order] = 0.0
            continue
        n = order // 2
        c[order] = math.factorial(2 * n) / (n * 2.0**n) * vb**n * d ** (n - 1)
        lhs = d * c[order] / (math.gamma(n) * 4.0**n)
        rhs = specfun.pochhammer(0.5, n) * (vb * d / 2.0) ** n
        ident[n] = (lhs, rhs)
    k4 = c[4] / c[2] ** 2 if 4 in c else 3.0 * d
    return CumulantSet(c=c, kappa3=0.0, kappa4=k4, identity=ident)


def characteristic_time(gp: GammaParams) -> tuple[float, float]:
    """``(3 delta, delta)``: the kurtosis-based and width-based crossover times."""
    return 3.0 * gp.delta, gp.delta


def edgeworth_correction(u, t: float, cum: CumulantSet):
    """First two Edgeworth terms of the tail probability in the standardised
    coordinate ``u``, with the per-unit-time ``kappa3`` and ``kappa4`` of ``cum``."""
    if not t > 0:
        raise ValueError("t must be > 0")
    u = np.asarray(u, dtype=float)
    k3, k4 = cum.kappa3, cum.kappa4
    q1 = k3 / 6.0 * (1.0 - u**2)
    q2 = (10.0 * k3**2 / 720.0 * u**5 + (k4 / 3.0 - 10.0 * k3**2 / 9.0) / 8.0 * u**3
          + (5.0 * k3**2 / 24.0 - k4 / 8.0) * u)
    out = np.exp(-0.5 * u**2) / math.sqrt(2.0 * math.pi) * (q1 / math.sqrt(t) + q2 / t)
    return float(out) if out.ndim == 0 else out


def edgeworth_tail_report(t: float, cum: CumulantSet, u: float = 1.0) -> dict:
    """Relative tail correction at ``u``: the Edgeworth value next to ``kappa4/(24 t)``."""
    dp = edgeworth_correction(u, t, cum)
    return {
        "u": u,
        "relative_correction": abs(dp) / specfun.norm_cdf(-u),
        "kappa4_over_24t": cum.kappa4 / (24.0 * t),
    }


def tail_probability_excess(u: float, gp: GammaParams, t: float) -> float:
    """``P(Z > u) - Phi(-u)`` for ``Z = Y/sqrt(vbar t)``, ``Y`` the driftless return."""
    k = t * gp.nu
    scale = gp.vbar * t

    def g(s):
        W = s / gp.mu
        return 0.0 if W <= 0.0 else specfun.norm_cdf(-u * math.sqrt(scale / W))

    return gamma_expectation(g, k)[0] - specfun.norm_cdf(-u)


def chapman_kolmogorov_check(p: MeasureParams, t_split: float, grid=None) -> float:
    """Max deviation between the density at ``t`` and the convolution of the
    densities at ``t - t_split`` and ``t_split`` over a grid of ``dx``."""
    if not 0 < t_split < p.t:
        raise ValueError("need 0 < t_split < t")
    p1 = MeasureParams(p.gamma_params, p.r_W, p.t - t_split)
    p2 = MeasureParams(p.gamma_params, p.r_W, t_split)
    centre, sd = _scale(p)
    if grid is None:
        grid = centre + sd * np.linspace(-4.0, 4.0, 9)
    c1, sd1 = _scale(p1)
    c2, sd2 = _scale(p2)
    worst = 0.0
    for x in np.atleast_1d(grid):
        x = float(x)
        f = lambda y: measure_density(y, p1) * measure_density(x - y, p2)
        pts = sorted({c1 + m * sd1 for m in (-8, -3, 0, 3, 8)}
                     | {x - c2 - m * sd2 for m in (-8, -3, 0, 3, 8)}
                     | {p1.r_W * p1.t, x - p2.r_W * p2.t})
        lo = pts[0] - 40 * max(sd1, sd2)
        hi = pts[-1] + 40 * max(sd1, sd2)
        edges = [lo] + pts + [hi]
        conv = sum(integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
                   for a, b in zip(edges[:-1], edges[1:]) if b > a)
        worst = max(worst, abs(conv - measure_density(x, p)))
    return worst


def martingale_check(p: MeasureParams) -> float:
    """``|exp(-r t) int exp(dx) P(dx) ddx - 1|``."""
    val = _integrate_dx(lambda x: math.exp(x + log_measure_density(x, p)), p)
    return abs(math.exp(-p.r_W * p.t) * val - 1.0)
