"""Gamma and Chi laws for variance and volatility, moment fits and the
window-scaling collapse diagnostic."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special as sc
from scipy import stats


class DegenerateSampleError(ValueError):
    """Samples carry no spread (or too few samples) to fit a law."""


class SingularityError(ValueError):
    """A density is infinite at the requested point."""


@dataclass(frozen=True)
class GammaParams:
    """Gamma law ``f(v) = mu^nu v^(nu-1) e^(-mu v) / Gamma(nu)``.

    ``mu`` is the rate (units 1/variance) and ``nu`` the shape.
    """

    mu: float
    nu: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be finite and > 0, got {self.mu}")
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"nu must be finite and > 0, got {self.nu}")

    @classmethod
    def from_mu_delta(cls, mu: float, delta: float) -> "GammaParams":
        if not delta > 0:
            raise ValueError(f"delta must be > 0, got {delta}")
        return cls(mu=mu, nu=1.0 / delta)

    @classmethod
    def from_vbar_delta(cls, vbar: float, delta: float) -> "GammaParams":
        if not (vbar > 0 and delta > 0):
            raise ValueError("vbar and delta must be > 0")
        return cls(mu=1.0 / (vbar * delta), nu=1.0 / delta)

    @property
    def vbar(self) -> float:
        return self.nu / self.mu

    @property
    def delta(self) -> float:
        return 1.0 / self.nu

    @property
    def q(self) -> float:
        return 1.0 + self.delta

    @property
    def beta(self) -> float:
        return self.vbar

    def scaled(self, T: float) -> "GammaParams":
        """Parameters of the law over a window of length ``T`` (``T mu``, ``T nu``)."""
        return GammaParams(self.mu * T, self.nu * T)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "nu": self.nu, "vbar": self.vbar, "delta": self.delta}


@dataclass(frozen=True)
class FitReport:
    params: GammaParams | None
    sample_mean: float
    sample_variance: float
    ks_distance: float
    n_samples: int
    model: str = "gamma"
    extra: dict | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict() if self.params is not None else None
        return d


def gamma_pdf(v, p: GammaParams):
    """Gamma density of the variance (vectorised)."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("gamma_pdf needs v >= 0")
    if p.nu < 1 and np.any(v == 0):
        raise SingularityError("gamma density is infinite at v = 0 when nu < 1")
    with np.errstate(divide="ignore"):
        logf = p.nu * math.log(p.mu) + sc.xlogy(p.nu - 1.0, v) - p.mu * v - math.lgamma(p.nu)
    out = np.exp(logf)
    return float(out) if out.ndim == 0 else out


def gamma_cdf(v, p: GammaParams):
    out = sc.gammainc(p.nu, p.mu * np.maximum(np.asarray(v, dtype=float), 0.0))
    return float(out) if np.ndim(out) == 0 else out


def chi_pdf(sigma, p: GammaParams):
    """Density of ``sigma = sqrt(v)``: ``2 sigma f(sigma^2)``."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("chi_pdf needs sigma >= 0")
    if p.nu < 0.5 and np.any(sigma == 0):
        raise SingularityError("chi density is infinite at 0 when nu < 1/2")
    if p.nu < 1 and np.any(sigma == 0):
        # 2 sigma f(sigma^2) has a finite limit for 1/2 <= nu < 1
        out = np.where(sigma == 0, 0.0 if p.nu > 0.5 else 2 * math.sqrt(p.mu) / math.gamma(0.5), 0.0)
        nz = sigma > 0
        out[nz] = 2 * sigma[nz] * gamma_pdf(sigma[nz] ** 2, p)
        return float(out) if out.ndim == 0 else out
    out = 2 * sigma * gamma_pdf(sigma**2, p)
    return float(out) if np.ndim(out) == 0 else out


def chi_cdf(sigma, p: GammaParams):
    return gamma_cdf(np.square(sigma), p)


def _check_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateSampleError("need at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    return x


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance between the samples and a CDF callable."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n), 0.0))


def fit_moments(samples) -> FitReport:
    """Method-of-moments Gamma fit: ``mu = E/Var``, ``nu = E^2/Var``."""
    v = _check_samples(samples)
    if np.any(v < 0):
        raise ValueError("variance samples must be >= 0")
    m = float(v.mean())
    var = float(v.var(ddof=1))
    if not var > 0:
        raise DegenerateSampleError("sample variance is zero")
    p = GammaParams(mu=m / var, nu=m * m / var)
    ks = ks_distance(v, lambda x: gamma_cdf(x, p))
    return FitReport(p, m, var, ks, v.size)


def fit_chi(vol_samples) -> FitReport:
    """Chi fit for volatilities: moment fit of the squared samples."""
    s = _check_samples(vol_samples)
    rep = fit_moments(s**2)
    ks = ks_distance(s, lambda x: chi_cdf(x, rep.params))
    return FitReport(rep.params, float(s.mean()), float(s.var(ddof=1)), ks, s.size, model="chi")


def fit_reference_models(samples) -> dict[str, FitReport]:
    """Maximum-likelihood Gaussian and log-normal fits with KS distances."""
    x = _check_samples(samples)
    out = {}
    m, sd = float(x.mean()), float(x.std())
    if not sd > 0:
        raise DegenerateSampleError("sample variance is zero")
    out["gaussian"] = FitReport(
        None, m, sd**2, ks_distance(x, lambda y: stats.norm.cdf(y, m, sd)), x.size,
        model="gaussian", extra={"loc": m, "scale": sd})
    if np.any(x <= 0):
        raise ValueError("log-normal fit needs strictly positive samples")
    lx = np.log(x)
    lm, ls = float(lx.mean()), float(lx.std())
    if not ls > 0:
        raise DegenerateSampleError("log-sample variance is zero")
    out["lognormal"] = FitReport(
        None, m, sd**2, ks_distance(x, lambda y: stats.norm.cdf(np.log(y), lm, ls)), x.size,
        model="lognormal", extra={"log_mean": lm, "log_sd": ls})
    return out


def compare_models(samples) -> dict[str, FitReport]:
    """Gamma, Gaussian and log-normal fits of the same samples."""
    out = {"gamma": fit_moments(samples)}
    out.update(fit_reference_models(samples))
    return out


def scaled_collapse(v, T: float, p: GammaParams):
    """Collapse coordinate ``x - (T nu - 1) ln x`` with ``x = T mu v``.

    ``p`` holds the per-unit-window parameters. Samples of
    Gamma(``T mu``, ``T nu``) have density ``e^{-v_tr(x)}/Gamma(T nu)`` in ``x``.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("scaled_collapse needs v > 0")
    if not T > 0:
        raise ValueError("T must be > 0")
    x = T * p.mu * v
    out = x + (1.0 - T * p.nu) * np.log(x)
    return float(out) if out.ndim == 0 else out


def collapse_density(samples, T: float, p: GammaParams, bins: int = 60):
    """Histogram of window-``T`` samples in collapse coordinates.

    Returns ``(v_tr, scaled)``, where ``scaled = Gamma(T nu) rho_T(v)/(T mu)``
    at the bin centres. For Gamma-distributed samples, ``scaled`` is close to
    ``exp(-v_tr)``.
    """
    v = np.asarray(samples, dtype=float)
    dens, edges = np.histogram(v, bins=bins, density=True)
    centres = 0.5 * (edges[1:] + edges[:-1])
    keep = dens > 0
    Tmu, Tnu = T * p.mu, T * p.nu
    scaled = np.exp(math.lgamma(Tnu) - math.log(Tmu)) * dens[keep]
    # the density in v carries a Jacobian x^(T nu - 1) relative to exp(-v_tr)
    return scaled_collapse(centres[keep], T, p), scaled


def _collapse_cdf(vtr_values, Tnu: float):
    # distribution of v_tr(x) for x ~ Gamma(Tnu, 1), via the two branches of
    # the inverse map when v_tr is not monotone (Tnu > 1)
    from scipy.optimize import brentq

    vt = np.asarray(vtr_values, dtype=float)
    c = 1.0 - Tnu
    if c >= 0:  # monotone increasing in x
        def inv(y):
            lo, hi = 1e-300, max(1.0, y + abs(c) * 50 + 50)
            return brentq(lambda x: x + c * math.log(x) - y, lo, hi, xtol=1e-14, rtol=1e-14)
        return np.array([sc.gammainc(Tnu, inv(y)) for y in vt])
    xm = Tnu - 1.0  # minimum of v_tr at x = T nu - 1
    ymin = xm + c * math.log(xm)
    out = np.empty_like(vt)
    for i, y in enumerate(vt):
        if y <= ymin:
            out[i] = 0.0
            continue
        f = lambda x: x + c * math.log(x) - y
        lo = brentq(f, 1e-300, xm, xtol=1e-300, rtol=1e-15)
        hi_b = xm + 1.0
        while f(hi_b) < 0:
            hi_b = xm + 2 * (hi_b - xm)
        hi = brentq(f, xm, hi_b, xtol=1e-14, rtol=1e-15)
        out[i] = sc.gammainc(Tnu, hi) - sc.gammainc(Tnu, lo)
    return out


def collapse_ks(samples, T: float, p: GammaParams) -> float:
    """KS distance of the collapse coordinates of the samples against the law
    they follow when the samples are Gamma(``T mu``, ``T nu``)."""
    vtr = scaled_collapse(samples, T, p)
    return ks_distance(vtr, lambda y: _collapse_cdf(y, T * p.nu))


def fit_window_scaling(windows, params: list[GammaParams]) -> dict:
    """Least-squares slopes of the per-window ``mu(T)`` and ``nu(T)`` fits.

    Linearity in ``T`` is not assumed; the residuals are reported.
    """
    T = np.asarray(windows, dtype=float)
    mus = np.array([p.mu for p in params])
    nus = np.array([p.nu for p in params])
    out = {}
    for name, y in (("mu", mus), ("nu", nus)):
        slope = float(T @ y / (T @ T))
        out[name] = {"slope": slope, "residuals": (y - slope * T).tolist()}
    return out


def delta_limit_check(p: GammaParams, eps: float | None = None) -> dict:
    """Gamma mass within ``vbar +/- eps`` (default ``eps = 0.01 vbar``)."""
    if eps is None:
        eps = 0.01 * p.vbar
    lo = max(p.vbar - eps, 0.0)
    hi = p.vbar + eps
    mass = float(sc.gammainc(p.nu, p.mu * hi) - sc.gammainc(p.nu, p.mu * lo))
    return {"delta": p.delta, "vbar": p.vbar, "eps": eps, "mass": mass}
