# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops; see ``_kernels_py`` for the reference."""

from libc.math cimport (exp, log, log1p, sqrt, fabs, cos, floor, lgamma,
                        isfinite, copysign, INFINITY, M_PI, expl, logl, log1pl,
                        sqrtl, cosl, fabsl, floorl, lgammal, copysignl, atanl)
from scipy.special.cython_special cimport kve as _kve

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double EPS = 2.220446049250313e-16
cdef double LN_SQRT_PI = 0.5723649429247001
cdef double EULER_GAMMA = 0.5772156649015329
cdef long double PI_L = 4.0 * atanl(<long double> 1.0)


cdef inline double _kve_d(double nu, double z) noexcept nogil:
    return _kve(nu, z)


cdef double _stirling_corr(double x) noexcept nogil:
    cdef double xi2 = 1.0 / (x * x)
    cdef double acc = 1.0 / 156.0
    acc = acc * xi2 - 691.0 / 360360.0
    acc = acc * xi2 + 1.0 / 1188.0
    acc = acc * xi2 - 1.0 / 1680.0
    acc = acc * xi2 + 1.0 / 1260.0
    acc = acc * xi2 - 1.0 / 360.0
    acc = acc * xi2 + 1.0 / 12.0
    return acc / x


cdef double _lgamma_signed(double x, double *sign) noexcept nogil:
    if x > 0.0:
        sign[0] = 1.0
        return lgamma(x)
    if x == floor(x):
        sign[0] = 0.0
        return INFINITY
    sign[0] = -1.0 if (<long long> floor(x)) % 2 != 0 else 1.0
    return lgamma(x)


cdef double _log_poch(double z, double k, double *sign) noexcept nogil:
    cdef double zk = z + k, sz, szk, lz, lzk
    if z > 20.0 and zk > 20.0:
        sign[0] = 1.0
        return (k * log(z) + (zk - 0.5) * log1p(k / z) - k
                + _stirling_corr(zk) - _stirling_corr(z))
    lz = _lgamma_signed(z, &sz)
    lzk = _lgamma_signed(zk, &szk)
    sign[0] = sz * szk
    return lzk - lz


def lgamma_signed(double x):
    cdef double s
    cdef double v = _lgamma_signed(x, &s)
    if s == 0.0:
        raise ValueError(f"Gamma has a pole at {x}")
    return v, s


def log_poch(double z, double k):
    cdef double s
    cdef double v = _log_poch(z, k, &s)
    if s == 0.0:
        raise ValueError(f"Gamma has a pole at {z} or {z + k}")
    return v, s


# The series kernels below run in extended precision (``long double``): the
# second and third sums of the CDF series cancel strongly for large
# moneyness, and the extra bits keep the result at double accuracy.

ctypedef long double ld

cdef ld EPS_L = 1.0842021724855044e-19


cdef ld _stirling_corr_l(ld x) noexcept nogil:
    cdef ld xi2 = 1.0 / (x * x)
    cdef ld acc = 1.0 / 156.0
    acc = acc * xi2 - 691.0 / 360360.0
    acc = acc * xi2 + 1.0 / 1188.0
    acc = acc * xi2 - 1.0 / 1680.0
    acc = acc * xi2 + 1.0 / 1260.0
    acc = acc * xi2 - 1.0 / 360.0
    acc = acc * xi2 + 1.0 / 12.0
    return acc / x


cdef ld _lgamma_signed_l(ld x, ld *sign) noexcept nogil:
    if x > 0.0:
        sign[0] = 1.0
        return lgammal(x)
    if x == floorl(x):
        sign[0] = 0.0
        return INFINITY
    sign[0] = -1.0 if (<long long> floorl(x)) % 2 != 0 else 1.0
    return lgammal(x)


cdef ld _log_poch_l(ld z, ld k, ld *sign) noexcept nogil:
    cdef ld zk = z + k, sz, szk, lz, lzk
    if z > 20.0 and zk > 20.0:
        sign[0] = 1.0
        return (k * logl(z) + (zk - 0.5) * log1pl(k / z) - k
                + _stirling_corr_l(zk) - _stirling_corr_l(z))
    lz = _lgamma_signed_l(z, &sz)
    lzk = _lgamma_signed_l(zk, &szk)
    sign[0] = sz * szk
    return lzk - lz


cdef ld _digamma_l(ld x) noexcept nogil:
    cdef ld acc = 0.0, xi2, tail
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    xi2 = 1.0 / (x * x)
    tail = xi2 * (1.0 / 12 - xi2 * (1.0 / 120 - xi2 * (1.0 / 252 - xi2 * (
        1.0 / 240 - xi2 * (1.0 / 132 - xi2 * (691.0 / 32760 - xi2 / 12.0))))))
    return acc + logl(x) - 0.5 / x - tail


def digamma(double x):
    return <double> _digamma_l(x)


cdef ld EULER_GAMMA_L = -_digamma_l(1.0)


cdef ld _hyp1f1_pos(ld a, ld b, ld z, ld tol, int max_terms,
                    ld *err, int *terms, int *ok) noexcept nogil:
    cdef ld s = 1.0, term = 1.0, abs_sum = 1.0
    cdef int small = 0, n = 0
    while n < max_terms:
        term *= (a + n) / (b + n) * z / (n + 1.0)
        n += 1
        s += term
        abs_sum += fabsl(term)
        if term == 0.0:
            break
        if fabsl(term) < tol * fabsl(s):
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    err[0] = fabsl(term) + EPS_L * abs_sum
    terms[0] = n
    ok[0] = 1 if (small >= 3 or term == 0.0) else 0
    return s


cdef ld _hyp1f1(ld a, ld b, ld z, ld tol, int max_terms,
                ld *err, int *terms, int *ok) noexcept nogil:
    cdef ld v, f
    if z < 0.0:
        v = _hyp1f1_pos(b - a, b, -z, tol, max_terms, err, terms, ok)
        f = expl(z)
        err[0] *= f
        return v * f
    return _hyp1f1_pos(a, b, z, tol, max_terms, err, terms, ok)


def hyp1f1(double a, double b, double z, double tol, int max_terms):
    cdef ld err
    cdef int terms, ok
    cdef ld v = _hyp1f1(a, b, z, tol, max_terms, &err, &terms, &ok)
    return <double> v, <double> err + 1.1102230246251565e-16 * fabsl(v), terms, bool(ok)


cdef ld _hyp1f1_dir_pos(ld a, ld b, ld z, ld da, ld db, ld tol, int max_terms,
                        ld *deriv, ld *err, int *terms, int *ok) noexcept nogil:
    cdef ld s = 1.0, ds = 0.0, term = 1.0, dlog = 0.0, dt, abs_sum = 1.0
    cdef int small = 0, n = 0
    while n < max_terms:
        dlog += da / (a + n) - db / (b + n)
        term *= (a + n) / (b + n) * z / (n + 1.0)
        n += 1
        s += term
        dt = term * dlog
        ds += dt
        abs_sum += fabsl(term) + fabsl(dt)
        if term == 0.0:
            break
        if fabsl(term) < tol * fabsl(s) and fabsl(dt) < tol * (fabsl(ds) if fabsl(ds) > fabsl(s) else fabsl(s)):
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    deriv[0] = ds
    err[0] = fabsl(term) * (1.0 + fabsl(dlog)) + EPS_L * abs_sum
    terms[0] = n
    ok[0] = 1 if (small >= 3 or term == 0.0) else 0
    return s


cdef ld _hyp1f1_dir(ld a, ld b, ld z, ld da, ld db, ld tol, int max_terms,
                    ld *deriv, ld *err, int *terms, int *ok) noexcept nogil:
    cdef ld v, f
    if z < 0.0:
        v = _hyp1f1_dir_pos(b - a, b, -z, db - da, db, tol, max_terms, deriv, err, terms, ok)
        f = expl(z)
        deriv[0] *= f
        err[0] *= f
        return v * f
    return _hyp1f1_dir_pos(a, b, z, da, db, tol, max_terms, deriv, err, terms, ok)


def hyp1f1_dir(double a, double b, double z, double da, double db, double tol, int max_terms):
    cdef ld d, err
    cdef int terms, ok
    cdef ld v = _hyp1f1_dir(a, b, z, da, db, tol, max_terms, &d, &err, &terms, &ok)
    return (<double> v, <double> d, <double> err + 1.1102230246251565e-16 * fabsl(v),
            terms, bool(ok))


def phi_sums(double A_, double vd_, double k_, double z_, double tol, int max_terms):
    cdef ld A = A_, vd = vd_, k = k_, z = z_
    cdef ld lvd2 = logl(0.5 * vd)
    cdef ld pref1 = sqrtl(vd / (2.0 * PI_L))
    cdef bint has_a = A != 0.0
    cdef ld X = 0.0, lX = 0.0, pref2 = 0.0, pref3 = 0.0
    cdef ld s1 = 0.0, s2 = 0.0, s3 = 0.0, abs_total = 0.0, big = 0.0, scale
    cdef ld F, G, e, sg, lcommon, lp, sp, t1, t2, t3, lc3, lg_half = lgammal(0.5)
    cdef int small = 0, n = 0, nt, okf
    cdef bint ok = True
    if has_a:
        X = 2.0 * A * A / vd
        lX = logl(X)
        pref2 = A * sqrtl(2.0 / (PI_L * vd))
        pref3 = copysignl(1.0, A) / cosl(PI_L * k)
    with nogil:
        while n < max_terms:
            F = _hyp1f1(n + 0.5, 2.0 * n + 2.0, z, 1e-21, 4000, &e, &nt, &okf)
            ok = ok and okf
            sg = -1.0 if n % 2 else 1.0
            lcommon = lgammal(n + 0.5) - lg_half - lgammal(2.0 * n + 2.0)
            lp = _log_poch_l(k, n + 0.5, &sp)
            t1 = pref1 * sg * expl(lp + lcommon + n * lvd2) * F
            t2 = 0.0
            t3 = 0.0
            if has_a:
                lp = _log_poch_l(k, -n - 0.5, &sp)
                t2 = pref2 * sp * sg * expl(lp + lcommon + n * lX) * F
                G = _hyp1f1(n + k, 2.0 * n + 1.0 + 2.0 * k, z, 1e-21, 4000, &e, &nt, &okf)
                ok = ok and okf
                lp = _log_poch_l(k, <ld> n, &sp)
                lc3 = lp - lgammal(2.0 * n + 2.0 * k + 1.0) - lgammal(n + 1.0) + (n + k) * lX
                t3 = pref3 * expl(lc3) * G
            s1 += t1
            s2 += t2
            s3 += t3
            n += 1
            # rounding grows with the log-magnitude of each coefficient
            abs_total += (fabsl(t1) + fabsl(t2) + fabsl(t3)) * (4.0 + fabsl(lcommon) + fabsl(lp) + n * fabsl(lX))
            big = fabsl(t1)
            if fabsl(t2) > big:
                big = fabsl(t2)
            if fabsl(t3) > big:
                big = fabsl(t3)
            if not isfinite(<double> big):
                break
            scale = fabsl(s1) + fabsl(s2 + s3)
            if big < tol * (1.0 if 1.0 > scale else scale):
                small += 1
                if small >= 3:
                    break
            else:
                small = 0
    if not isfinite(<double> big):
        return <double> s1, <double> s2, <double> s3, n, INFINITY, INFINITY, False
    return (<double> s1, <double> s2, <double> s3, n, <double> big,
            <double> (EPS_L * abs_total) + 2.220446049250313e-16, bool(ok and small >= 3))


def half_sums(double A_, double vd_, int l, double z_, double tol, int max_terms):
    cdef ld A = A_, vd = vd_, z = z_
    cdef ld k = l + 0.5
    cdef ld lvd2 = logl(0.5 * vd)
    cdef ld pref1 = sqrtl(vd / (2.0 * PI_L))
    cdef bint has_a = A != 0.0
    cdef ld X = 0.0, lX = 0.0, pref2 = 0.0, sign_tail = 0.0, lg_k = lgammal(k)
    cdef ld s1 = 0.0, s2 = 0.0, tail = 0.0, abs_total = 0.0, big = 0.0, scale
    cdef ld F, dF = 0.0, e, sg, lcommon, lp, sp, t1, t2, t3, lc, br, lg_half = lgammal(0.5)
    cdef ld psi_m1 = -EULER_GAMMA_L
    cdef ld psi_nh = _digamma_l(l + 0.5)
    cdef ld psi_2n2 = _digamma_l(2.0 * l + 2.0)
    cdef int small = 0, n = 0, nt, okf, m
    cdef bint ok = True
    if has_a:
        X = 2.0 * A * A / vd
        lX = logl(X)
        pref2 = A * sqrtl(2.0 / (PI_L * vd))
        sign_tail = copysignl(1.0, A) * (-1.0 if l % 2 else 1.0) / PI_L
    with nogil:
        while n < max_terms:
            if has_a and n >= l:
                F = _hyp1f1_dir(n + 0.5, 2.0 * n + 2.0, z, 1.0, 2.0, 1e-21, 4000,
                                &dF, &e, &nt, &okf)
            else:
                F = _hyp1f1(n + 0.5, 2.0 * n + 2.0, z, 1e-21, 4000, &e, &nt, &okf)
            ok = ok and okf
            sg = -1.0 if n % 2 else 1.0
            lcommon = lgammal(n + 0.5) - lg_half - lgammal(2.0 * n + 2.0)
            lp = _log_poch_l(k, n + 0.5, &sp)
            t1 = pref1 * sg * expl(lp + lcommon + n * lvd2) * F
            t2 = 0.0
            t3 = 0.0
            if has_a:
                if n < l:
                    lp = _log_poch_l(k, -n - 0.5, &sp)
                    t2 = pref2 * sp * sg * expl(lp + lcommon + n * lX) * F
                else:
                    m = n - l
                    lc = ((n + 0.5) * lX + lgammal(n + 0.5) - lgammal(2.0 * n + 2.0)
                          - lgammal(m + 1.0) - lg_k)
                    br = F * (psi_m1 - lX - psi_nh + 2.0 * psi_2n2) - dF
                    t3 = sign_tail * expl(lc) * br
                    psi_m1 += 1.0 / (m + 1.0)
                    psi_nh += 1.0 / (n + 0.5)
                    psi_2n2 += 1.0 / (2.0 * n + 2.0) + 1.0 / (2.0 * n + 3.0)
            s1 += t1
            s2 += t2
            tail += t3
            n += 1
            abs_total += (fabsl(t1) + fabsl(t2) + fabsl(t3)) * (4.0 + fabsl(lcommon) + fabsl(lp) + n * fabsl(lX))
            big = fabsl(t1)
            if fabsl(t2) > big:
                big = fabsl(t2)
            if fabsl(t3) > big:
                big = fabsl(t3)
            if not isfinite(<double> big):
                break
            scale = fabsl(s1) + fabsl(s2 + tail)
            if n > l and big < tol * (1.0 if 1.0 > scale else scale):
                small += 1
                if small >= 3:
                    break
            else:
                small = 0
    if not isfinite(<double> big):
        return <double> s1, <double> s2, <double> tail, n, INFINITY, INFINITY, False
    return (<double> s1, <double> s2, <double> tail, n, <double> big,
            <double> (EPS_L * abs_total) + 2.220446049250313e-16, bool(ok and small >= 3))


def log_bessel_k(double nu, double z):
    cdef double v, k0, k1, logk, r, nu0
    cdef long n, j
    nu = fabs(nu)
    if not z > 0.0:
        raise ValueError("log_bessel_k needs z > 0")
    v = _kve_d(nu, z)
    if isfinite(v) and v > 0.0:
        return log(v) - z
    n = <long> floor(nu)
    nu0 = nu - n
    k0 = _kve_d(nu0, z)
    k1 = _kve_d(nu0 + 1.0, z)
    if n == 0 or not (isfinite(k0) and isfinite(k1)):
        return INFINITY
    r = k1 / k0
    logk = log(k0) + log(r)
    for j in range(1, n):
        r = 1.0 / r + 2.0 * (nu0 + j) / z
        logk += log(r)
    return logk - z


cdef void _drift_sums(double x, double nu, double *s0_out, double *s1_out) noexcept nogil:
    cdef double term = 1.0 / nu, H = 1.0 / nu, s0, s1, a
    cdef int small = 0
    cdef long j = 0
    s0 = term
    s1 = term * H
    while j < 100000:
        a = nu + j + 1.0
        term *= x / a
        H += 1.0 / a
        s0 += term
        s1 += term * H
        j += 1
        if j > x and term < 1e-17 * s0:
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    s0_out[0] = s0
    s1_out[0] = s1


def drift_sums(double x, double nu, double tol=1e-17, long max_terms=100000):
    cdef double s0, s1
    _drift_sums(x, nu, &s0, &s1)
    return s0, s1


cdef long RTAB = 4096


cdef void _drift_sums_tab(double x, double nu, const double *rtab, double *s0_out,
                          double *s1_out) noexcept nogil:
    # rtab[j] = 1 / (nu + j); falls back to division past the table
    cdef double term = rtab[0], H = rtab[0], s0, s1, ra
    cdef int small = 0
    cdef long j = 0
    s0 = term
    s1 = term * H
    while j < 100000:
        if j + 1 < RTAB:
            ra = rtab[j + 1]
        else:
            ra = 1.0 / (nu + j + 1.0)
        term *= x * ra
        H += ra
        s0 += term
        s1 += term * H
        j += 1
        if j > x and term < 1e-17 * s0:
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    s0_out[0] = s0
    s1_out[0] = s1


cdef double _drift_cf(double x, double a, double *dU_out) noexcept nogil:
    # U = e^x x^-a Gamma(a, x) by the Legendre continued fraction, with its
    # a-derivative carried alongside (x >= a + 1)
    cdef double FP = 1e-300, b = x + 1.0 - a, db = -1.0
    cdef double c = 1.0 / FP, dc = 0.0, d, dd, h, dh, an, dan, den, dden, c2, de, dde
    cdef long i
    d = 1.0 / b
    dd = -db * d * d
    h = d
    dh = dd
    for i in range(1, 100000):
        an = -i * (i - a)
        dan = <double> i
        b += 2.0
        den = an * d + b
        dden = dan * d + an * dd + db
        if fabs(den) < FP:
            den = FP
        d = 1.0 / den
        dd = -dden * d * d
        c2 = b + an / c
        dc = db + dan / c - an * dc / (c * c)
        c = c2
        if fabs(c) < FP:
            c = FP
        de = d * c
        dde = dd * c + d * dc
        dh = dh * de + h * dde
        h = h * de
        if fabs(de - 1.0) < 3e-16 and fabs(dde) < 3e-16 * (fabs(dh / h) + 1.0):
            break
    dU_out[0] = dh
    return h


cdef double _drift_B(double x, double nu, double psi_nu, bint literal, const double *rtab) noexcept nogil:
    cdef double s0, s1, B, U, dU
    if x < nu + 1.0:
        if rtab != NULL:
            _drift_sums_tab(x, nu, rtab, &s0, &s1)
        else:
            _drift_sums(x, nu, &s0, &s1)
        B = s0 * (log(x) - psi_nu) - s1
    else:
        U = _drift_cf(x, nu, &dU)
        B = -(dU + (log(x) - psi_nu) * U)
    if literal:
        B += exp(lgamma(nu) + x - nu * log(x)) * (psi_nu - log(nu))
    return B


cdef double _drift_correction_tab(double v, double mu, double nu, double gam, double dmu,
                                  double dnu, double psi_nu, bint literal,
                                  const double *rtab) noexcept nogil:
    cdef double a = v * dmu / (mu * gam), x, B
    if dnu != 0.0 and v > 0.0:
        x = v * mu
        B = _drift_B(x, nu, psi_nu, literal, rtab)
        a += v * B * dnu / gam
    return a


cdef void _fill_rtab(double nu, double *rtab) noexcept nogil:
    cdef long j
    for j in range(RTAB):
        rtab[j] = 1.0 / (nu + j)


cdef double _drift_correction(double v, double mu, double nu, double gam, double dmu,
                              double dnu, double psi_nu, bint literal) noexcept nogil:
    cdef double a = v * dmu / (mu * gam), x, B
    if dnu != 0.0 and v > 0.0:
        x = v * mu
        B = _drift_B(x, nu, psi_nu, literal, NULL)
        a += v * B * dnu / gam
    return a


def drift_correction(double v, double mu, double nu, double gam, double dmu,
                     double dnu, double psi_nu, bint literal):
    return _drift_correction(v, mu, nu, gam, dmu, dnu, psi_nu, literal)


def drift_correction_array(v, double mu, double nu, double gam, double dmu,
                           double dnu, double psi_nu, bint literal):
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    out = np.empty(vv.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t p
    with nogil:
        for p in range(vv.shape[0]):
            o[p] = _drift_correction(vv[p], mu, nu, gam, dmu, dnu, psi_nu, literal)
    return out


def em_variance(double[::1] v, const double[:, ::1] Z, const double[::1] gam,
                const double[::1] mu, const double[::1] nu, const double[::1] dmu,
                const double[::1] dnu, const double[::1] psi, double dt, bint noise,
                bint reflect, double vmax, bint literal, bint correct, record,
                long record_every, long rec_offset):
    cdef Py_ssize_t i, p, n_steps = Z.shape[0], n_paths = Z.shape[1]
    cdef double sq = sqrt(dt), g, a, x, vn, vp
    cdef long events = 0
    cdef bint blown = False
    cdef double[:, ::1] rec
    cdef bint has_rec = record is not None
    cdef double[::1] rtab_arr = np.empty(RTAB)
    cdef double *rtab = &rtab_arr[0]
    if has_rec:
        rec = record
    for i in range(n_steps):
        g = gam[i]
        with nogil:
            _fill_rtab(nu[i], rtab)
            for p in range(n_paths):
                vp = v[p]
                a = _drift_correction_tab(vp, mu[i], nu[i], g, dmu[i], dnu[i], psi[i], literal, rtab) if correct else 0.0
                vn = vp + g * (nu[i] - mu[i] * vp - a) * dt
                if noise:
                    vn += sqrt(2.0 * g * (vp if vp > 0.0 else 0.0)) * sq * Z[i, p]
                if vn <= 0.0:
                    events += 1
                    vn = -vn if reflect else vp
                if vn > vmax:
                    blown = True
                v[p] = vn
        if blown:
            return -1
        if has_rec and (rec_offset + i + 1) % record_every == 0:
            rec[(rec_offset + i + 1) // record_every - 1, :] = v
    return events


def em_volatility(double[::1] s, const double[:, ::1] Z, const double[::1] gam,
                  const double[::1] mu, const double[::1] nu, const double[::1] dmu,
                  const double[::1] dnu, const double[::1] psi, double dt, bint noise,
                  bint reflect, double vmax, bint literal, bint correct, record,
                  long record_every, long rec_offset):
    cdef Py_ssize_t i, p, n_steps = Z.shape[0], n_paths = Z.shape[1]
    cdef double sq = sqrt(dt), g, corr, sn, sp, v, rep
    cdef long events = 0
    cdef bint blown = False
    cdef double[:, ::1] rec
    cdef bint has_rec = record is not None
    cdef double[::1] rtab_arr = np.empty(RTAB)
    cdef double *rtab = &rtab_arr[0]
    if has_rec:
        rec = record
    for i in range(n_steps):
        g = gam[i]
        with nogil:
            _fill_rtab(nu[i], rtab)
            for p in range(n_paths):
                sp = s[p]
                v = sp * sp
                corr = 0.0
                rep = 0.0
                if sp > 0.0:
                    rep = (nu[i] - 0.5) / sp
                    if correct:
                        corr = sp * _drift_correction_tab(v, mu[i], nu[i], g, dmu[i], dnu[i], psi[i], literal, rtab) / v
                sn = sp + 0.5 * g * (rep - mu[i] * sp - corr) * dt
                if noise:
                    sn += sqrt(0.5 * g) * sq * Z[i, p]
                if sn <= 0.0:
                    events += 1
                    sn = -sn if reflect else sp
                if sn > vmax:
                    blown = True
                s[p] = sn
        if blown:
            return -1
        if has_rec and (rec_offset + i + 1) % record_every == 0:
            rec[(rec_offset + i + 1) // record_every - 1, :] = s
    return events
