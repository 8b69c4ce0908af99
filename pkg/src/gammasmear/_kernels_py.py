"""Pure-Python versions of the hot loops.

Each public function here has a twin with the same signature in the compiled
``_ckernels`` extension. :mod:`gammasmear.kernels` picks one at import time.

The compiled series kernels work in extended precision; these work in
double precision. Where the CDF series cancels strongly, the fallback
therefore reports a larger rounding estimate, and the pricing layer moves
those points to quadrature.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import kve

EPS = 2.220446049250313e-16
LN_SQRT_PI = 0.5 * math.log(math.pi)
EULER_GAMMA = 0.5772156649015329

# Stirling correction coefficients B_2m / (2m (2m - 1)).
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)


def _stirling_corr(x):
    xi2 = 1.0 / (x * x)
    acc = 0.0
    for c in reversed(_STIRLING):
        acc = acc * xi2 + c
    return acc / x


def lgamma_signed(x):
    """Return ``(log|Gamma(x)|, sign Gamma(x))``; raises at the poles."""
    if x > 0.0:
        return math.lgamma(x), 1.0
    if x == math.floor(x):
        raise ValueError(f"Gamma has a pole at {x}")
    sign = -1.0 if int(math.floor(x)) % 2 else 1.0
    return math.lgamma(x), sign


def log_poch(z, k):
    """Return ``(log|(z)_k|, sign)`` with ``(z)_k = Gamma(z+k)/Gamma(z)``."""
    zk = z + k
    if z > 20.0 and zk > 20.0:
        # difference of Stirling series, avoids cancellation for large z
        val = (k * math.log(z) + (zk - 0.5) * math.log1p(k / z) - k
               + _stirling_corr(zk) - _stirling_corr(z))
        return val, 1.0
    lz, sz = lgamma_signed(z)
    lzk, szk = lgamma_signed(zk)
    return lzk - lz, sz * szk


def digamma(x):
    """psi(x) for x > 0 by upward shift and the asymptotic series."""
    acc = 0.0
    while x < 8.0:
        acc -= 1.0 / x
        x += 1.0
    xi2 = 1.0 / (x * x)
    tail = xi2 * (1.0 / 12 - xi2 * (1.0 / 120 - xi2 * (1.0 / 252 - xi2 * (
        1.0 / 240 - xi2 * (1.0 / 132 - xi2 * 691.0 / 32760)))))
    return acc + math.log(x) - 0.5 / x - tail


def _hyp1f1_pos(a, b, z, tol, max_terms):
    s = 1.0
    term = 1.0
    abs_sum = 1.0
    small = 0
    n = 0
    while n < max_terms:
        term *= (a + n) / (b + n) * z / (n + 1.0)
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
    converged = small >= 3 or term == 0.0
    return s, abs(term) + EPS * abs_sum, n, converged


def hyp1f1(a, b, z, tol, max_terms):
    """Kummer M(a, b, z): ``(value, abs_err, terms, converged)``.

    Negative arguments go through Kummer's transformation so the series
    always has terms of one sign once ``b - a`` and ``b`` are positive.
    """
    if z < 0.0:
        v, e, n, ok = _hyp1f1_pos(b - a, b, -z, tol, max_terms)
        f = math.exp(z)
        return v * f, e * f, n, ok
    return _hyp1f1_pos(a, b, z, tol, max_terms)


def _hyp1f1_dir_pos(a, b, z, da, db, tol, max_terms):
    s = 1.0
    ds = 0.0
    term = 1.0
    dlog = 0.0
    small = 0
    n = 0
    abs_sum = 1.0
    while n < max_terms:
        dlog += da / (a + n) - db / (b + n)
        term *= (a + n) / (b + n) * z / (n + 1.0)
        n += 1
        s += term
        dt = term * dlog
        ds += dt
        abs_sum += abs(term) + abs(dt)
        if term == 0.0:
            break
        if abs(term) < tol * abs(s) and abs(dt) < tol * max(abs(ds), abs(s)):
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    err = abs(term) * (1.0 + abs(dlog)) + EPS * abs_sum
    return s, ds, err, n, small >= 3 or term == 0.0


def hyp1f1_dir(a, b, z, da, db, tol, max_terms):
    """M(a, b, z) and its derivative along ``(da, db)`` in parameter space.

    Returns ``(value, derivative, abs_err, terms, converged)``.
    """
    if z < 0.0:
        v, d, e, n, ok = _hyp1f1_dir_pos(b - a, b, -z, db - da, db, tol, max_terms)
        f = math.exp(z)
        return v * f, d * f, e * f, n, ok
    return _hyp1f1_dir_pos(a, b, z, da, db, tol, max_terms)


def phi_sums(A, vd, k, z, tol, max_terms):
    """The three partial sums of the smeared normal-CDF series.

    ``vd`` is the per-time mean variance times the width, ``k`` the Gamma
    shape of the integrated variance and ``z`` the Kummer argument (``-A``
    for the spot leg, ``+A`` for the strike leg).

    Returns ``(s1, s2, s3, terms, trunc_err, round_err, converged)``.
    """
    lg_half = LN_SQRT_PI
    lvd2 = math.log(0.5 * vd)
    pref1 = math.sqrt(vd / (2.0 * math.pi))
    has_a = A != 0.0
    if has_a:
        X = 2.0 * A * A / vd
        lX = math.log(X)
        pref2 = A * math.sqrt(2.0 / (math.pi * vd))
        pref3 = math.copysign(1.0, A) / math.cos(math.pi * k)
    s1 = s2 = s3 = 0.0
    abs_total = 0.0
    small = 0
    n = 0
    big = 0.0
    ok = True
    while n < max_terms:
        F, eF, _, okF = hyp1f1(n + 0.5, 2.0 * n + 2.0, z, 1e-17, 2000)
        ok = ok and okF
        sg = -1.0 if n % 2 else 1.0
        lcommon = math.lgamma(n + 0.5) - lg_half - math.lgamma(2.0 * n + 2.0)
        lp1, _ = log_poch(k, n + 0.5)
        t1 = pref1 * sg * math.exp(lp1 + lcommon + n * lvd2) * F
        t2 = t3 = 0.0
        if has_a:
            lp2, sp2 = log_poch(k, -n - 0.5)
            t2 = pref2 * sp2 * sg * math.exp(lp2 + lcommon + n * lX) * F
            G, eG, _, okG = hyp1f1(n + k, 2.0 * n + 1.0 + 2.0 * k, z, 1e-17, 2000)
            ok = ok and okG
            lp3, _ = log_poch(k, float(n))
            lc3 = lp3 - math.lgamma(2.0 * n + 2.0 * k + 1.0) - math.lgamma(n + 1.0) + (n + k) * lX
            t3 = pref3 * math.exp(lc3) * G
        s1 += t1
        s2 += t2
        s3 += t3
        n += 1
        # rounding grows with the log-magnitude of each coefficient
        abs_total += (abs(t1) + abs(t2) + abs(t3)) * (4.0 + abs(lcommon) + abs(lp1) + n * abs(lX if has_a else 0.0))
        big = max(abs(t1), abs(t2), abs(t3))
        if not math.isfinite(big):
            return s1, s2, s3, n, math.inf, math.inf, False
        if big < tol * max(1.0, abs(s1) + abs(s2 + s3)):
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    converged = ok and small >= 3
    return s1, s2, s3, n, big, EPS * abs_total + EPS, converged


def half_sums(A, vd, l, z, tol, max_terms):
    """Partial sums at the half-integer shape ``k = l + 1/2``.

    At these shapes the second and third sums of the regular series have
    cancelling poles; the finite limit is a logarithmic series that uses
    digamma values and the parameter derivative of M.

    Returns ``(s1, s2, tail, terms, trunc_err, round_err, converged)``.
    """
    k = l + 0.5
    lg_half = LN_SQRT_PI
    lvd2 = math.log(0.5 * vd)
    pref1 = math.sqrt(vd / (2.0 * math.pi))
    has_a = A != 0.0
    if has_a:
        X = 2.0 * A * A / vd
        lX = math.log(X)
        pref2 = A * math.sqrt(2.0 / (math.pi * vd))
        sign_tail = math.copysign(1.0, A) * (-1.0 if l % 2 else 1.0) / math.pi
        lg_k = math.lgamma(k)
    s1 = s2 = tail = 0.0
    abs_total = 0.0
    small = 0
    n = 0
    big = 0.0
    ok = True
    # digamma values at m + 1, n + 1/2, 2n + 2 advanced by recurrence
    psi_m1 = -EULER_GAMMA
    psi_nh = digamma(l + 0.5)
    psi_2n2 = digamma(2.0 * l + 2.0)
    while n < max_terms:
        need_dir = has_a and n >= l
        if need_dir:
            F, dF, eF, _, okF = hyp1f1_dir(n + 0.5, 2.0 * n + 2.0, z, 1.0, 2.0, 1e-17, 2000)
        else:
            F, eF, _, okF = hyp1f1(n + 0.5, 2.0 * n + 2.0, z, 1e-17, 2000)
        ok = ok and okF
        sg = -1.0 if n % 2 else 1.0
        lcommon = math.lgamma(n + 0.5) - lg_half - math.lgamma(2.0 * n + 2.0)
        lp1, _ = log_poch(k, n + 0.5)
        t1 = pref1 * sg * math.exp(lp1 + lcommon + n * lvd2) * F
        t2 = t3 = 0.0
        if has_a:
            if n < l:
                lp2, sp2 = log_poch(k, -n - 0.5)
                t2 = pref2 * sp2 * sg * math.exp(lp2 + lcommon + n * lX) * F
            else:
                m = n - l
                lc = ((n + 0.5) * lX + math.lgamma(n + 0.5) - math.lgamma(2.0 * n + 2.0)
                      - math.lgamma(m + 1.0) - lg_k)
                br = F * (psi_m1 - lX - psi_nh + 2.0 * psi_2n2) - dF
                t3 = sign_tail * math.exp(lc) * br
                psi_m1 += 1.0 / (m + 1.0)
                psi_nh += 1.0 / (n + 0.5)
                psi_2n2 += 1.0 / (2.0 * n + 2.0) + 1.0 / (2.0 * n + 3.0)
        s1 += t1
        s2 += t2
        tail += t3
        n += 1
        abs_total += (abs(t1) + abs(t2) + abs(t3)) * (4.0 + abs(lcommon) + abs(lp1) + n * abs(lX if has_a else 0.0))
        big = max(abs(t1), abs(t2), abs(t3))
        if not math.isfinite(big):
            return s1, s2, tail, n, math.inf, math.inf, False
        if n > l and big < tol * max(1.0, abs(s1) + abs(s2 + tail)):
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    converged = ok and small >= 3
    return s1, s2, tail, n, big, EPS * abs_total + EPS, converged


def log_bessel_k(nu, z):
    """log K_nu(z) for z > 0, by upward ratio recurrence when K overflows."""
    nu = abs(nu)
    if not z > 0.0:
        raise ValueError("log_bessel_k needs z > 0")
    v = float(kve(nu, z))
    if math.isfinite(v) and v > 0.0:
        return math.log(v) - z
    n = int(math.floor(nu))
    nu0 = nu - n
    k0 = float(kve(nu0, z))
    k1 = float(kve(nu0 + 1.0, z))
    if n == 0 or not (math.isfinite(k0) and math.isfinite(k1)):
        return math.inf
    logk = math.log(k0)
    r = k1 / k0
    logk += math.log(r)
    for j in range(1, n):
        r = 1.0 / r + 2.0 * (nu0 + j) / z
        logk += math.log(r)
    return logk - z


def drift_sums(x, nu, tol=1e-17, max_terms=100000):
    """``S0 = sum x^j / (nu)_{j+1}`` and ``S1`` (the same weighted by harmonic sums)."""
    term = 1.0 / nu
    H = 1.0 / nu
    s0 = term
    s1 = term * H
    small = 0
    j = 0
    while j < max_terms:
        a = nu + j + 1.0
        term *= x / a
        H += 1.0 / a
        s0 += term
        s1 += term * H
        j += 1
        if j > x and term < tol * s0:
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    return s0, s1


def drift_cf(x, a):
    """``U = e^x x^-a Gamma(a, x)`` and ``dU/da`` by the Legendre continued
    fraction (use for ``x >= a + 1``)."""
    x = np.asarray(x, dtype=float)
    FP = 1e-300
    b = x + 1.0 - a
    db = -1.0
    c = np.full_like(x, 1.0 / FP)
    dc = np.zeros_like(x)
    d = 1.0 / b
    dd = -db * d * d
    h = d.copy()
    dh = dd.copy()
    with np.errstate(over="ignore"):
        return _cf_loop(a, b, db, c, dc, d, dd, h, dh, FP)


def _cf_loop(a, b, db, c, dc, d, dd, h, dh, FP):
    for i in range(1, 100000):
        an = -i * (i - a)
        b = b + 2.0
        den = an * d + b
        dden = i * d + an * dd + db
        den = np.where(np.abs(den) < FP, FP, den)
        d = 1.0 / den
        dd = -dden * d * d
        c2 = b + an / c
        dc = db + i / c - an * dc / (c * c)
        c = np.where(np.abs(c2) < FP, FP, c2)
        de = d * c
        dde = dd * c + d * dc
        dh = dh * de + h * dde
        h = h * de
        if np.all(np.abs(de - 1.0) < 3e-16) and np.all(np.abs(dde) < 3e-16 * (np.abs(dh / h) + 1.0)):
            break
    return h, dh


def _drift_B(x, nu, psi_nu, literal):
    # series below x = nu + 1, continued fraction above (the series cancels there)
    x = np.asarray(x, dtype=float)
    B = np.empty_like(x)
    lo = x < nu + 1.0
    if np.any(lo):
        s0, s1 = _drift_sums_vec(x[lo], nu)
        B[lo] = s0 * (np.log(x[lo]) - psi_nu) - s1
    if not np.all(lo):
        xh = x[~lo]
        U, dU = drift_cf(xh, nu)
        B[~lo] = -(dU + (np.log(xh) - psi_nu) * U)
    if literal:
        B += np.exp(math.lgamma(nu) + x - nu * np.log(x)) * (psi_nu - math.log(nu))
    return B


def drift_correction(v, mu, nu, gam, dmu, dnu, psi_nu, literal):
    a = v * dmu / (mu * gam)
    if dnu != 0.0 and v > 0.0:
        B = float(_drift_B(np.array([v * mu]), nu, psi_nu, literal)[0])
        a += v * B * dnu / gam
    return a


def _drift_sums_vec(x, nu):
    term = np.full_like(x, 1.0 / nu)
    H = 1.0 / nu
    s0 = term.copy()
    s1 = term * H
    xmax = float(x.max()) if x.size else 0.0
    j = 0
    while True:
        a = nu + j + 1.0
        term *= x / a
        H += 1.0 / a
        s0 += term
        s1 += term * H
        j += 1
        if j > xmax and np.all(term < 1e-17 * s0):
            break
    return s0, s1


def _drift_correction_vec(v, mu, nu, gam, dmu, dnu, psi_nu, literal):
    a = v * (dmu / (mu * gam))
    if dnu != 0.0:
        x = v * mu
        pos = x > 0.0
        a[pos] += v[pos] * _drift_B(x[pos], nu, psi_nu, literal) * (dnu / gam)
    return a


def drift_correction_array(v, mu, nu, gam, dmu, dnu, psi_nu, literal):
    v = np.ascontiguousarray(v, dtype=np.float64)
    return _drift_correction_vec(v, mu, nu, gam, dmu, dnu, psi_nu, bool(literal))


def em_variance(v, Z, gam, mu, nu, dmu, dnu, psi, dt, noise, reflect, vmax, literal,
                correct, record, record_every, rec_offset):
    """Euler-Maruyama for the corrected variance SDE, in place on ``v``.

    ``Z`` holds the standard normals of this step chunk, shape
    ``(n_steps, n_paths)``; the schedule arrays are indexed by step.
    Returns the number of boundary events, or -1 if a path exceeded ``vmax``.
    """
    events = 0
    sq = math.sqrt(dt)
    for i in range(Z.shape[0]):
        g = gam[i]
        if correct:
            a = _drift_correction_vec(v, mu[i], nu[i], g, dmu[i], dnu[i], psi[i], literal)
        else:
            a = 0.0
        vn = v + g * (nu[i] - mu[i] * v - a) * dt
        if noise:
            vn += np.sqrt(2.0 * g * np.maximum(v, 0.0)) * sq * Z[i]
        bad = vn <= 0.0
        nb = int(bad.sum())
        if nb:
            events += nb
            vn[bad] = -vn[bad] if reflect else v[bad]
        v[:] = vn
        if np.any(v > vmax):
            return -1
        if record is not None and (rec_offset + i + 1) % record_every == 0:
            record[(rec_offset + i + 1) // record_every - 1] = v
    return events


def em_volatility(s, Z, gam, mu, nu, dmu, dnu, psi, dt, noise, reflect, vmax, literal,
                  correct, record, record_every, rec_offset):
    """Euler-Maruyama for the volatility SDE; same conventions as :func:`em_variance`."""
    events = 0
    sq = math.sqrt(dt)
    for i in range(Z.shape[0]):
        g = gam[i]
        if correct:
            # a(s^2)/s computed as s * (a/v) to stay finite at small s
            v = s * s
            a_over_v = np.zeros_like(s)
            pos = v > 0.0
            a_over_v[pos] = _drift_correction_vec(
                v[pos], mu[i], nu[i], g, dmu[i], dnu[i], psi[i], literal) / v[pos]
            corr = s * a_over_v
        else:
            corr = 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            rep = np.where(s > 0.0, (nu[i] - 0.5) / s, 0.0)
        sn = s + 0.5 * g * (rep - mu[i] * s - corr) * dt
        if noise:
            sn += math.sqrt(0.5 * g) * sq * Z[i]
        bad = sn <= 0.0
        nb = int(bad.sum())
        if nb:
            events += nb
            sn[bad] = -sn[bad] if reflect else s[bad]
        s[:] = sn
        if np.any(s > vmax):
            return -1
        if record is not None and (rec_offset + i + 1) % record_every == 0:
            record[(rec_offset + i + 1) // record_every - 1] = s
    return events
