"""Real special functions.

Gamma-family functions, the Bessel function and the normal CDF are taken
from the standard library and :mod:`scipy.special`. This module adds what
those lack:
- Pochhammer symbols with a sign, valid for negative arguments.
- The confluent hypergeometric series with a truncation estimate.
- The parameter derivative of that series.
- ``2F2``.
- A log-space modified Bessel function for large orders.

All functions act on real scalars.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from . import kernels

EULER_GAMMA = 0.5772156649015329
DEFAULT_MAX_TERMS = 500
DEFAULT_TOL = 1e-16
EPS = np.finfo(float).eps


class SpecialFunctionError(ArithmeticError):
    """Base class for special-function failures."""


class DomainError(SpecialFunctionError, ValueError):
    """Argument outside the domain of the function."""


class PoleError(DomainError):
    """Argument at a pole."""


class ConvergenceError(SpecialFunctionError):
    """A series did not reach its tolerance within the term budget."""

    def __init__(self, message: str, partial: float = math.nan, terms: int = 0):
        super().__init__(message)
        self.partial = partial
        self.terms = terms


class BesselOverflowWarning(RuntimeWarning):
    """K_nu(z) exceeds the double range; the value is reported as +inf."""


@dataclass(frozen=True)
class EvalResult:
    """Value of a series together with its error estimate and the terms used."""

    value: float
    abs_error_estimate: float
    terms_used: int


def _finite(name: str, *xs: float) -> None:
    for x in xs:
        if not math.isfinite(x):
            raise DomainError(f"{name}: non-finite argument {x!r}")


def _is_nonpos_int(x: float) -> bool:
    return x <= 0 and x == math.floor(x)


def log_gamma(x: float) -> float:
    """log Gamma(x) for x > 0."""
    _finite("log_gamma", x)
    if x <= 0:
        raise DomainError(f"log_gamma needs x > 0, got {x}")
    return math.lgamma(x)


def gamma_sign(x: float) -> float:
    """Sign of Gamma(x) for x not a pole."""
    if _is_nonpos_int(x):
        raise PoleError(f"gamma_sign: pole at {x}")
    return kernels.lgamma_signed(x)[1]


def digamma(x: float) -> float:
    """psi(x) = Gamma'(x)/Gamma(x) for x > 0."""
    _finite("digamma", x)
    if x <= 0:
        raise DomainError(f"digamma needs x > 0, got {x}")
    return float(sc.psi(x))


def incomplete_gamma_upper(a: float, x: float) -> float:
    """Gamma(a, x) for a > 0, x >= 0."""
    _finite("incomplete_gamma_upper", a, x)
    if a <= 0 or x < 0:
        raise DomainError("incomplete_gamma_upper needs a > 0 and x >= 0")
    return math.exp(log_incomplete_gamma_upper(a, x)) if x > 0 else math.gamma(a)


def log_incomplete_gamma_upper(a: float, x: float) -> float:
    """log Gamma(a, x), accurate when Gamma(a, x) under- or overflows."""
    if a <= 0 or x < 0:
        raise DomainError("log_incomplete_gamma_upper needs a > 0 and x >= 0")
    q = float(sc.gammaincc(a, x))
    if q > 1e-280:
        return math.log(q) + math.lgamma(a)
    # Lentz continued fraction for e^x x^-a Gamma(a, x), valid for x > a + 1
    return a * math.log(x) - x + math.log(_upper_gamma_cf(a, x))


def _upper_gamma_cf(a: float, x: float) -> float:
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ConvergenceError("upper incomplete gamma continued fraction did not converge")


def incomplete_gamma_upper_scaled(a: float, x: float) -> float:
    """e^x x^-a Gamma(a, x), finite for large x."""
    if x <= 0:
        raise DomainError("incomplete_gamma_upper_scaled needs x > 0")
    return math.exp(log_incomplete_gamma_upper(a, x) + x - a * math.log(x))


def log_pochhammer(z: float, k: float) -> tuple[float, float]:
    """``(log|(z)_k|, sign)`` where ``(z)_k = Gamma(z+k)/Gamma(z)``, k real."""
    _finite("pochhammer", z, k)
    if _is_nonpos_int(z) or _is_nonpos_int(z + k):
        raise PoleError(f"pochhammer: Gamma pole at z={z} or z+k={z + k}")
    return kernels.log_poch(z, k)


def pochhammer(z: float, k: float) -> float:
    """Rising factorial ``(z)_k = Gamma(z+k)/Gamma(z)`` for real ``k``.

    Negative ``k`` gives ``(z)_{-n} = Gamma(z-n)/Gamma(z)``.
    """
    lv, s = log_pochhammer(z, k)
    return s * math.exp(lv)


def kummer_1f1(a: float, b: float, z: float, tol: float = DEFAULT_TOL,
               max_terms: int = DEFAULT_MAX_TERMS) -> EvalResult:
    """Confluent hypergeometric ``1F1(a; b; z)`` by power series.

    For ``z < 0`` the series is evaluated after Kummer's transformation
    ``M(a, b, z) = e^z M(b - a, b, -z)``. Summation stops once three
    consecutive terms fall below ``tol`` times the partial sum.
    """
    _finite("kummer_1f1", a, b, z)
    if _is_nonpos_int(b):
        raise PoleError(f"kummer_1f1: b={b} is a non-positive integer")
    v, err, n, ok = kernels.hyp1f1(a, b, z, tol, max_terms)
    if not ok:
        raise ConvergenceError(f"1F1({a}, {b}, {z}) did not converge in {max_terms} terms", v, n)
    return EvalResult(v, err, n)


def kummer_1f1_dparam(a: float, b: float, z: float, da: float = 1.0, db: float = 0.0,
                      tol: float = DEFAULT_TOL,
                      max_terms: int = DEFAULT_MAX_TERMS) -> tuple[EvalResult, float]:
    """``1F1(a; b; z)`` and its derivative along ``(da, db)`` in ``(a, b)``."""
    _finite("kummer_1f1_dparam", a, b, z)
    if _is_nonpos_int(b):
        raise PoleError(f"kummer_1f1_dparam: b={b} is a non-positive integer")
    v, d, err, n, ok = kernels.hyp1f1_dir(a, b, z, da, db, tol, max_terms)
    if not ok:
        raise ConvergenceError("1F1 parameter derivative did not converge", v, n)
    return EvalResult(v, err, n), d


def hyp_2f2(a1: float, a2: float, b1: float, b2: float, z: float,
            tol: float = DEFAULT_TOL, max_terms: int = DEFAULT_MAX_TERMS) -> EvalResult:
    """Generalised hypergeometric ``2F2(a1, a2; b1, b2; z)``.

    The case ``a1 = a2 = a``, ``b1 = b2 = a + 1`` with ``z < 0`` is summed
    as ``a^2 e^z sum_j (-z)^j/(a)_{j+1} H_j`` (all terms positive). Other
    parameter sets use the direct series. That series loses accuracy when
    ``|z|`` is large and negative, and an error is raised if the
    cancellation estimate exceeds ``1e-8`` relative.
    """
    _finite("hyp_2f2", a1, a2, b1, b2, z)
    if _is_nonpos_int(b1) or _is_nonpos_int(b2):
        raise PoleError("hyp_2f2: b parameter at a non-positive integer")
    if z < 0 and a1 == a2 and b1 == b2 == a1 + 1.0 and a1 > 0:
        s0, s1 = kernels.drift_sums(-z, a1)
        v = a1 * a1 * math.exp(z) * s1
        return EvalResult(v, 8 * EPS * abs(v), int(abs(z)) + 1)
    s = 1.0
    term = 1.0
    abs_sum = 1.0
    small = 0
    n = 0
    while n < max_terms:
        term *= (a1 + n) * (a2 + n) / ((b1 + n) * (b2 + n)) * z / (n + 1.0)
        n += 1
        s += term
        abs_sum += abs(term)
        if term == 0.0:
            break
        if abs(term) < tol * abs(s):
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    if small < 3 and term != 0.0:
        raise ConvergenceError(f"2F2 did not converge in {max_terms} terms", s, n)
    err = abs(term) + 4 * EPS * abs_sum
    if err > 1e-8 * max(abs(s), 1e-300):
        raise ConvergenceError("2F2 series lost accuracy to cancellation", s, n)
    return EvalResult(s, err, n)


def log_bessel_k(order: float, z: float) -> float:
    """log K_nu(z) for z > 0; orders far beyond the double range are fine."""
    _finite("log_bessel_k", order, z)
    if z <= 0:
        raise DomainError("log_bessel_k needs z > 0")
    return kernels.log_bessel_k(order, z)


def bessel_k(order: float, z: float) -> float:
    """Modified Bessel function K_nu(z) for z > 0 (even in nu).

    Values beyond the double range come back as ``+inf`` with a
    :class:`BesselOverflowWarning`. Use :func:`log_bessel_k` in that regime.
    """
    lv = log_bessel_k(order, z)
    if lv > 709.78:
        warnings.warn(f"K_{order}({z}) overflows", BesselOverflowWarning, stacklevel=2)
        return math.inf
    return math.exp(lv)


def norm_cdf(y):
    """Standard normal CDF (vectorised)."""
    out = sc.ndtr(y)
    return float(out) if np.ndim(out) == 0 else out


def norm_pdf(y):
    """Standard normal density (vectorised)."""
    out = np.exp(-0.5 * np.square(y)) / math.sqrt(2.0 * math.pi)
    return float(out) if np.ndim(out) == 0 else out
