"""Option pricing with Gamma-distributed variance.

Modules: :mod:`specfun` (special functions), :mod:`distfit` (Gamma/Chi
laws and fits), :mod:`volest` (volatility estimation), :mod:`measure`
(return density and cumulants), :mod:`pricing` (series prices),
:mod:`hedge` (delta-hedge backtests), :mod:`sdesim` (SDE ensembles) and
:mod:`cli`.
"""

__version__ = "0.1.0"

from .distfit import FitReport, GammaParams  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .pricing import (OptionContract, PriceResult, SeriesControl, call_price,  # noqa: E402
                      delta_hedge, option_price, put_price)

__all__ = [
    "BACKEND", "FitReport", "GammaParams", "OptionContract", "PriceResult", "SeriesControl",
    "call_price", "delta_hedge", "option_price", "put_price", "__version__",
]
