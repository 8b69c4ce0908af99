"""Compare the compiled kernels with their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each row times one kernel call in both backends (best of ``--repeat`` runs)
and prints the speed-up.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np
from scipy.special import digamma

from gammasmear import _kernels_py as py

try:
    from gammasmear import _ckernels as cy
except ImportError:  # pragma: no cover
    cy = None


def cases():
    A, vd, k = 0.05, 5e-4, 7.46
    yield "phi_sums", lambda m: m.phi_sums(A, vd, k, -A, 1e-15, 200)
    yield "half_sums", lambda m: m.half_sums(A, vd, 2, -A, 1e-15, 200)
    yield "hyp1f1", lambda m: m.hyp1f1(10.5, 22.0, -3.0, 1e-16, 2000)
    yield "log_bessel_k", lambda m: m.log_bessel_k(5.5, 12.0)
    v = np.random.default_rng(0).gamma(4.0, 0.25, 4096)
    psi = float(digamma(4.0))
    yield "drift_correction_array[4096]", lambda m: m.drift_correction_array(
        v, 4.0, 4.0, 1.0, 4.0, 4.0, psi, False)

    n_steps, n_paths = 64, 4096
    Z = np.random.default_rng(1).standard_normal((n_steps, n_paths))
    t = 1.0 + 1e-3 * np.arange(n_steps)
    sched = (np.ones(n_steps), 4 * t, 4 * t, np.full(n_steps, 4.0), np.full(n_steps, 4.0),
             digamma(4 * t))

    def em(m):
        state = v.copy()
        m.em_variance(state, Z, *sched, 1e-3, True, True, 1e9, False, True, None, 1, 0)

    yield f"em_variance[{n_steps}x{n_paths}]", em


def best_time(fn, repeat: int) -> float:
    number, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels not built; run `python3 setup.py build_ext --inplace`")
        return 1
    print(f"{'kernel':34s} {'cython':>12s} {'python':>12s} {'speed-up':>9s}")
    for name, call in cases():
        tc = best_time(lambda: call(cy), args.repeat)
        tp = best_time(lambda: call(py), args.repeat)
        print(f"{name:34s} {tc * 1e6:10.1f}us {tp * 1e6:10.1f}us {tp / tc:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
