"""Returns, intraday-normalised returns, windowed volatility and histogram
densities from a price series."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MarketSeries:
    """Price samples on a uniform grid.

    ``timestamps`` may be numbers or ``datetime64`` values; only the
    ordering is used here. ``trading_day_length`` is the number of samples
    per trading day and is only needed for intraday normalisation.
    """

    timestamps: np.ndarray
    prices: np.ndarray
    sampling_interval: float = 1.0
    trading_day_length: int | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps)
        px = np.asarray(self.prices, dtype=float)
        if px.ndim != 1 or ts.shape != px.shape:
            raise ValueError("timestamps and prices must be 1-d and the same length")
        if px.size < 2:
            raise ValueError("a series needs at least 2 samples")
        if not np.all(np.isfinite(px)) or np.any(px <= 0):
            raise ValueError("prices must be finite and > 0")
        steps = np.diff(ts)
        zero = np.timedelta64(0) if ts.dtype.kind == "M" else 0
        if np.any(steps <= zero):
            raise ValueError("timestamps must be strictly increasing")
        if self.trading_day_length is not None and self.trading_day_length < 1:
            raise ValueError("trading_day_length must be >= 1")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)

    def __len__(self) -> int:
        return self.prices.size


@dataclass(frozen=True)
class VolEstimatorConfig:
    window_n: int
    normalize: bool = False
    n_trading_days: int | None = None

    def __post_init__(self):
        if int(self.window_n) != self.window_n or self.window_n < 1:
            raise ValueError("window_n must be a positive integer")
        if self.normalize and (self.n_trading_days is None or self.n_trading_days < 1):
            raise ValueError("n_trading_days must be a positive integer when normalize is set")


def log_returns(series) -> np.ndarray:
    """``ln(S[n+1]/S[n])``; accepts a :class:`MarketSeries` or a price array."""
    px = series.prices if isinstance(series, MarketSeries) else np.asarray(series, dtype=float)
    if px.size < 2:
        raise ValueError("need at least 2 prices")
    if np.any(px <= 0):
        raise ValueError("prices must be > 0")
    return np.diff(np.log(px))


def normalized_returns(returns, n_td: int, day_length: int | None = None) -> np.ndarray:
    """Divide each return by the mean of ``|R|`` at its intraday slot.

    Slot ``s`` collects returns ``R[d*L + s]`` over the trading days ``d``.
    ``L`` is ``day_length`` when given, otherwise ``len(returns) // n_td``.
    An incomplete final day is dropped with a warning.
    """
    if isinstance(returns, MarketSeries):
        day_length = day_length or returns.trading_day_length
        returns = log_returns(returns)
    r = np.asarray(returns, dtype=float)
    if n_td < 1:
        raise ValueError("n_td must be >= 1")
    L = day_length if day_length is not None else r.size // n_td
    if L < 1:
        raise ValueError("fewer returns than trading days")
    days = min(n_td, r.size // L)
    if days < 1:
        raise ValueError("not a single complete trading day")
    used = days * L
    if used < r.size:
        warnings.warn(f"dropping {r.size - used} returns of an incomplete final day", stacklevel=2)
    grid = r[:used].reshape(days, L)
    denom = np.abs(grid).mean(axis=0)
    zero = np.flatnonzero(denom == 0)
    if zero.size:
        raise ZeroDivisionError(f"intraday slot {int(zero[0])} has zero mean |return|")
    return (grid / denom).ravel()


def windowed_volatility(returns, config: VolEstimatorConfig | int) -> np.ndarray:
    """Forward-window mean of ``|R|``: ``sigma[eta] = mean(|R[eta:eta+n]|)``."""
    n = config.window_n if isinstance(config, VolEstimatorConfig) else int(config)
    a = np.abs(np.asarray(returns, dtype=float))
    if n < 1:
        raise ValueError("window must be >= 1")
    if n > a.size:
        raise ValueError(f"window {n} exceeds the {a.size} available returns")
    if n <= 256:
        return np.lib.stride_tricks.sliding_window_view(a, n).mean(axis=1)
    # long windows: running sums (rounding grows like eps * len(returns))
    c = np.concatenate(([0.0], np.cumsum(a)))
    return (c[n:] - c[:-n]) / n


def volatility_pipeline(series: MarketSeries, config: VolEstimatorConfig) -> np.ndarray:
    """Returns, optional intraday normalisation, then the windowed volatility."""
    r = log_returns(series)
    if config.normalize:
        r = normalized_returns(r, config.n_trading_days, series.trading_day_length)
    return windowed_volatility(r, config)


def empirical_density(values, bin_width: float):
    """Relative-frequency histogram; returns ``(edges, density)``.

    Bins are aligned on multiples of ``bin_width``, and ``density * width``
    sums to one.
    """
    x = np.asarray(values, dtype=float).ravel()
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    if x.size < 1:
        raise ValueError("need at least one value")
    lo = np.floor(x.min() / bin_width)
    hi = np.floor(x.max() / bin_width) + 1
    edges = np.arange(lo, hi + 1) * bin_width
    counts, edges = np.histogram(x, bins=edges)
    return edges, counts / (x.size * bin_width)
