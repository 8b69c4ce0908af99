"""Euler-Maruyama ensembles for the variance and volatility diffusions whose
instantaneous law is Gamma (variance) or Chi (volatility).

The variance follows

    dv = gamma [nu - mu v - a(v)] dt + sqrt(2 gamma v) dW,

and the volatility sigma = sqrt(v) follows

    dsigma = (gamma/2) [(nu - 1/2)/sigma - mu sigma - a(sigma^2)/sigma] dt + sqrt(gamma/2) dW.

With time-dependent ``mu(t)``, ``nu(t)`` the correction ``a`` keeps the
Gamma(mu(t), nu(t)) law exact at every instant. Without it the drift is the
Cox-Ingersoll-Ross one.

Random numbers come from Philox streams keyed by ``(seed, block)``, where
blocks are fixed groups of paths. An ensemble is therefore bit-identical
for any number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special as sc
from scipy import stats

from . import kernels
from .distfit import GammaParams, chi_cdf, gamma_cdf, ks_distance

BLOCK_PATHS = 4096
STEP_CHUNK = 256
BOUNDARIES = ("reflect", "reject")


class SimulationUnstable(RuntimeError):
    """A path left the stability window; the step size is too large."""


# ------------------------------------------------------------------ drift term

def drift_correction(v, mu: float, nu: float, gam: float = 1.0, dmu: float = 0.0,
                     dnu: float = 0.0, literal: bool = False):
    """Drift correction ``a(v, mu, nu)`` that keeps Gamma(mu(t), nu(t)) stationary.

    ``a = v mu'/(mu gamma) + v B(v mu, nu) nu'/gamma`` with
    ``B(x, nu) = e^x x^-nu gamma_lower(nu, x) (ln x - psi(nu)) - e^x 2F2(nu, nu; nu+1, nu+1; -x)/nu^2``.
    ``B`` comes from a positive series for ``v mu < nu + 1`` and from a
    continued fraction for the upper incomplete Gamma (with its ``nu``
    derivative) above that, so large ``v mu`` does not cancel. ``literal=True`` uses ``ln(x/nu)`` in place of ``ln x`` in the
    complete-Gamma part. That variant does not keep the law stationary and
    exists for comparison.

    Accepts a scalar or an array ``v`` and returns the same shape.
    """
    for name, val in (("mu", mu), ("nu", nu), ("gamma", gam)):
        if not (math.isfinite(val) and val > 0):
            raise ValueError(f"{name} must be finite and > 0, got {val}")
    arr = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("v must be finite and > 0")
    psi = float(sc.digamma(nu))
    out = kernels.drift_correction_array(np.ravel(arr), mu, nu, gam, dmu, dnu, psi, literal)
    out = np.asarray(out).reshape(arr.shape)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"drift series overflowed for v*mu up to {float(arr.max() * mu):.3g}")
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------- config

def _fd(f: Callable[[float], float], t: float) -> float:
    h = 1e-6 * max(1.0, abs(t))
    return (f(t + h) - f(t - h)) / (2.0 * h)


@dataclass(frozen=True)
class SdeConfig:
    """Schedules and numerical settings of an ensemble run.

    ``mu_fn``, ``nu_fn`` and ``gamma_fn`` map time to positive numbers; the
    derivative functions default to central differences. ``t0`` is the
    start time (linear schedules are singular at 0). ``v0`` of ``None``
    starts every path from an exact draw of the law at ``t0``.
    """

    mu_fn: Callable[[float], float]
    nu_fn: Callable[[float], float]
    dt: float = 1e-3
    horizon: float = 1.0
    n_paths: int = 10_000
    seed: int = 0
    boundary: str = "reflect"
    t0: float = 1.0
    gamma_fn: Callable[[float], float] = lambda t: 1.0
    dmu_fn: Callable[[float], float] | None = None
    dnu_fn: Callable[[float], float] | None = None
    v0: float | None = None
    noise: bool = True
    correct: bool = True
    literal: bool = False
    record_every: int = 0
    blowup_factor: float = 1e6
    schedule: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be >= dt")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.record_every < 0:
            raise ValueError("record_every must be >= 0")
        if self.v0 is not None and not self.v0 > 0:
            raise ValueError("v0 must be > 0")

    @classmethod
    def linear(cls, mu_rate: float, nu_rate: float, **kw) -> "SdeConfig":
        """``mu(t) = mu_rate t``, ``nu(t) = nu_rate t``."""
        if not (mu_rate > 0 and nu_rate > 0):
            raise ValueError("rates must be > 0")
        return cls(mu_fn=lambda t: mu_rate * t, nu_fn=lambda t: nu_rate * t,
                   dmu_fn=lambda t: mu_rate, dnu_fn=lambda t: nu_rate,
                   schedule={"type": "linear", "mu": mu_rate, "nu": nu_rate}, **kw)

    @classmethod
    def constant(cls, mu: float, nu: float, **kw) -> "SdeConfig":
        """Time-independent parameters; the correction vanishes."""
        if not (mu > 0 and nu > 0):
            raise ValueError("mu and nu must be > 0")
        return cls(mu_fn=lambda t: mu, nu_fn=lambda t: nu,
                   dmu_fn=lambda t: 0.0, dnu_fn=lambda t: 0.0,
                   schedule={"type": "constant", "mu": mu, "nu": nu}, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SdeConfig":
        d = dict(d)
        sched = d.pop("schedule", None) or {}
        kind = sched.get("type", "linear")
        if kind == "linear":
            return cls.linear(float(sched["mu"]), float(sched["nu"]), **d)
        if kind == "constant":
            return cls.constant(float(sched["mu"]), float(sched["nu"]), **d)
        raise ValueError(f"unknown schedule type {kind!r}")

    def to_dict(self) -> dict:
        if not self.schedule:
            raise ValueError("only linear or constant schedules serialise")
        return {
            "schedule": dict(self.schedule), "dt": self.dt, "horizon": self.horizon,
            "n_paths": int(self.n_paths), "seed": int(self.seed), "boundary": self.boundary,
            "t0": self.t0, "v0": self.v0, "noise": self.noise, "correct": self.correct,
            "literal": self.literal, "record_every": self.record_every,
            "blowup_factor": self.blowup_factor,
        }

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def params_at(self, t: float) -> GammaParams:
        return GammaParams(self.mu_fn(t), self.nu_fn(t))

    def schedule_arrays(self) -> dict[str, np.ndarray]:
        """Coefficients at the left end of every step."""
        t = self.t0 + self.dt * np.arange(self.n_steps)
        mu = np.array([self.mu_fn(x) for x in t], dtype=float)
        nu = np.array([self.nu_fn(x) for x in t], dtype=float)
        gam = np.array([self.gamma_fn(x) for x in t], dtype=float)
        dmu_fn = self.dmu_fn or (lambda x: _fd(self.mu_fn, x))
        dnu_fn = self.dnu_fn or (lambda x: _fd(self.nu_fn, x))
        dmu = np.array([dmu_fn(x) for x in t], dtype=float)
        dnu = np.array([dnu_fn(x) for x in t], dtype=float)
        if np.any(mu <= 0) or np.any(nu <= 0) or np.any(gam <= 0):
            raise ValueError("mu, nu and gamma must stay > 0 over the run")
        return {"t": t, "mu": mu, "nu": nu, "gam": gam, "dmu": dmu, "dnu": dnu,
                "psi": sc.digamma(nu)}


# -------------------------------------------------------------------- ensemble

@dataclass
class Ensemble:
    """Result of a run. ``paths`` has shape ``(n_records, n_paths)`` when recorded."""

    kind: str
    terminal: np.ndarray
    t_end: float
    boundary_events: int
    config: SdeConfig
    times: np.ndarray | None = None
    paths: np.ndarray | None = None

    @property
    def terminal_variance(self) -> np.ndarray:
        return self.terminal**2 if self.kind == "volatility" else self.terminal

    def target(self) -> GammaParams:
        return self.config.params_at(self.t_end)

    def summary(self) -> dict:
        x = self.terminal
        q = np.quantile(x, [0.01, 0.25, 0.5, 0.75, 0.99])
        return {
            "kind": self.kind, "t_end": self.t_end, "n_paths": int(x.size),
            "mean": float(x.mean()), "variance": float(x.var(ddof=1)),
            "skewness": float(stats.skew(x)), "excess_kurtosis": float(stats.kurtosis(x)),
            "quantiles": dict(zip(("q01", "q25", "q50", "q75", "q99"), map(float, q))),
            "boundary_events": int(self.boundary_events),
        }

    def histogram(self, bins: int = 60) -> tuple[np.ndarray, np.ndarray]:
        dens, edges = np.histogram(self.terminal, bins=bins, density=True)
        return edges, dens

    def dump_paths(self, path) -> tuple[int, int]:
        """Write recorded paths as little-endian float64, path-major.

        Path ``p`` occupies values ``[p*n_records, (p+1)*n_records)``.
        Returns ``(n_paths, n_records)``.
        """
        if self.paths is None:
            raise ValueError("no paths recorded; set record_every > 0")
        np.ascontiguousarray(self.paths.T, dtype="<f8").tofile(path)
        return self.paths.shape[1], self.paths.shape[0]


def load_paths(path, n_records: int) -> np.ndarray:
    """Read a dump written by :meth:`Ensemble.dump_paths`; shape ``(n_paths, n_records)``."""
    data = np.fromfile(path, dtype="<f8")
    if data.size % n_records:
        raise ValueError("file size is not a multiple of n_records")
    return data.reshape(-1, n_records)


def _run_block(kind: str, cfg: SdeConfig, sched: dict, block: int, n: int, vmax: float):
    rng = np.random.Generator(np.random.Philox(key=(int(cfg.seed) << 64) | block))
    if cfg.v0 is None:
        p0 = cfg.params_at(cfg.t0)
        state = rng.gamma(p0.nu, 1.0 / p0.mu, size=n)
    else:
        state = np.full(n, float(cfg.v0))
    if kind == "volatility":
        state = np.sqrt(state)
    n_steps = cfg.n_steps
    rec = None
    if cfg.record_every:
        rec = np.empty((n_steps // cfg.record_every, n))
    kernel = kernels.em_variance if kind == "variance" else kernels.em_volatility
    events = 0
    for s0 in range(0, n_steps, STEP_CHUNK):
        s1 = min(n_steps, s0 + STEP_CHUNK)
        Z = rng.standard_normal((s1 - s0, n))
        sl = slice(s0, s1)
        ev = kernel(state, Z, sched["gam"][sl], sched["mu"][sl], sched["nu"][sl],
                    sched["dmu"][sl], sched["dnu"][sl], sched["psi"][sl], cfg.dt,
                    cfg.noise, cfg.boundary == "reflect", vmax, cfg.literal, cfg.correct,
                    rec, max(cfg.record_every, 1), s0)
        if ev < 0:
            raise SimulationUnstable(
                f"a path exceeded {vmax:.3g} near t = {cfg.t0 + s1 * cfg.dt:.6g}; reduce dt (now {cfg.dt})")
        events += ev
    return state, rec, events


def _simulate(kind: str, cfg: SdeConfig, workers: int | None) -> Ensemble:
    sched = cfg.schedule_arrays()
    vbar_max = float(np.max(sched["nu"] / sched["mu"]))
    vmax = cfg.blowup_factor * vbar_max
    if kind == "volatility":
        vmax = math.sqrt(vmax)
    n_blocks = -(-int(cfg.n_paths) // BLOCK_PATHS)
    sizes = [min(BLOCK_PATHS, cfg.n_paths - b * BLOCK_PATHS) for b in range(n_blocks)]
    workers = workers or min(n_blocks, os.cpu_count() or 1)
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda b: _run_block(kind, cfg, sched, b, sizes[b], vmax),
                                range(n_blocks)))
    else:
        parts = [_run_block(kind, cfg, sched, b, sizes[b], vmax) for b in range(n_blocks)]
    terminal = np.concatenate([p[0] for p in parts])
    paths = times = None
    if cfg.record_every:
        paths = np.concatenate([p[1] for p in parts], axis=1)
        times = cfg.t0 + cfg.dt * cfg.record_every * np.arange(1, paths.shape[0] + 1)
    return Ensemble(kind, terminal, cfg.t_end, sum(p[2] for p in parts), cfg, times, paths)


def simulate_variance(cfg: SdeConfig, workers: int | None = None) -> Ensemble:
    """Euler-Maruyama ensemble of the variance SDE.

    Negative proposals are reflected or the step is rejected (the path keeps
    its old value), per ``cfg.boundary``. Raises :class:`SimulationUnstable`
    when a path exceeds ``blowup_factor`` times the largest mean variance.
    """
    return _simulate("variance", cfg, workers)


def simulate_volatility(cfg: SdeConfig, workers: int | None = None) -> Ensemble:
    """Euler-Maruyama ensemble of the volatility SDE (additive noise)."""
    return _simulate("volatility", cfg, workers)


# --------------------------------------------------------------------- checks

@dataclass(frozen=True)
class StationaryReport:
    law: str
    ks_distance: float
    n_samples: int
    moments: dict

    def to_dict(self) -> dict:
        return {"law": self.law, "ks_distance": self.ks_distance,
                "n_samples": self.n_samples, "moments": self.moments}


def _chi_moments(p: GammaParams) -> tuple[float, float, float, float]:
    raw = [math.exp(sc.gammaln(p.nu + k / 2) - sc.gammaln(p.nu)) * p.mu ** (-k / 2)
           for k in range(1, 5)]
    m1, m2, m3, m4 = raw
    var = m2 - m1 * m1
    skew = (m3 - 3 * m1 * var - m1**3) / var**1.5
    c4 = m4 - 4 * m1 * m3 + 6 * m1 * m1 * m2 - 3 * m1**4
    return m1, var, skew, c4 / var**2 - 3.0


def stationary_check(samples, p: GammaParams, law: str = "gamma") -> StationaryReport:
    """KS distance and a moment table against the Gamma (or Chi) law ``p``.

    ``samples`` may be an :class:`Ensemble`; then its terminal values are
    used. The table compares mean, variance, skewness and excess kurtosis.
    """
    if isinstance(samples, Ensemble):
        samples = samples.terminal
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise ValueError("stationary_check needs at least 100 samples")
    if law == "gamma":
        cdf = lambda y: gamma_cdf(y, p)
        target = (p.vbar, p.nu / p.mu**2, 2.0 / math.sqrt(p.nu), 6.0 / p.nu)
    elif law == "chi":
        cdf = lambda y: chi_cdf(y, p)
        target = _chi_moments(p)
    else:
        raise ValueError("law must be 'gamma' or 'chi'")
    sample = (float(x.mean()), float(x.var(ddof=1)), float(stats.skew(x)), float(stats.kurtosis(x)))
    names = ("mean", "variance", "skewness", "excess_kurtosis")
    table = {n: {"sample": s, "target": t} for n, s, t in zip(names, sample, target)}
    return StationaryReport(law, ks_distance(x, cdf), int(x.size), table)
