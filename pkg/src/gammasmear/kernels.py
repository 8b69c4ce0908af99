"""Kernel backend selection.

The compiled extension is used when it imports; otherwise (or when the
environment variable ``GAMMASMEAR_PURE_PYTHON`` is set to a non-empty value
other than ``0``) the pure-Python twins are used. ``BACKEND`` names the
choice.
"""

from __future__ import annotations

import os

from . import _kernels_py

_force_py = os.environ.get("GAMMASMEAR_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py
        BACKEND = "python"

EULER_GAMMA = _kernels_py.EULER_GAMMA

lgamma_signed = _impl.lgamma_signed
log_poch = _impl.log_poch
digamma = _impl.digamma
hyp1f1 = _impl.hyp1f1
hyp1f1_dir = _impl.hyp1f1_dir
phi_sums = _impl.phi_sums
half_sums = _impl.half_sums
log_bessel_k = _impl.log_bessel_k
drift_sums = _impl.drift_sums
drift_correction_array = _impl.drift_correction_array
em_variance = _impl.em_variance
em_volatility = _impl.em_volatility

__all__ = [
    "BACKEND", "EULER_GAMMA", "lgamma_signed", "log_poch", "digamma", "hyp1f1",
    "hyp1f1_dir", "phi_sums", "half_sums", "log_bessel_k", "drift_sums",
    "drift_correction_array", "em_variance", "em_volatility",
]
