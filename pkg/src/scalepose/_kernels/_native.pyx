# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for the hot kernels; mirrors ``_pure`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport acos, cbrt, copysign, cos, fabs, hypot, isfinite, sqrt

cnp.import_array()

DEF DEDUP_RTOL = 1e-8
DEF M_PI = 3.141592653589793238462643383279502884


cdef double _cubic_max_real_root(double a, double b, double c) noexcept nogil:
    cdef double p = b - a * a / 3.0
    cdef double q = c + a * (2.0 * a * a - 9.0 * b) / 27.0
    cdef double disc = 0.25 * q * q + p * p * p / 27.0
    cdef double t, sq, rho, theta, mag, cand
    cdef double f, df
    cdef int k
    if disc >= 0:
        sq = sqrt(disc)
        t = cbrt(-0.5 * q + sq) + cbrt(-0.5 * q - sq)
    else:
        rho = sqrt(-p * p * p / 27.0)
        theta = -0.5 * q / rho
        if theta > 1.0:
            theta = 1.0
        elif theta < -1.0:
            theta = -1.0
        theta = acos(theta)
        mag = 2.0 * sqrt(-p / 3.0)
        t = mag * cos(theta / 3.0)
        for k in range(1, 3):
            cand = mag * cos((theta - 2.0 * M_PI * k) / 3.0)
            if cand > t:
                t = cand
    cdef double m = t - a / 3.0
    for k in range(2):
        f = ((m + a) * m + b) * m + c
        df = (3.0 * m + 2.0 * a) * m + b
        if df == 0.0:
            break
        m -= f / df
    return m


cdef int _quadratic_real_roots(double b, double c, double* out, int n) noexcept nogil:
    cdef double disc = b * b - 4.0 * c
    cdef double sq, q, lim
    if disc < 0:
        lim = b * b + fabs(c)
        if lim < 1.0:
            lim = 1.0
        if disc > -1e-12 * lim:
            out[n] = -0.5 * b
            return n + 1
        return n
    sq = sqrt(disc)
    q = -0.5 * (b + copysign(sq, b))
    out[n] = q
    if q != 0.0:
        out[n + 1] = c / q
    else:
        out[n + 1] = -b - q
    return n + 2


cdef int _quartic_roots_c(double c4, double c3, double c2, double c1, double c0,
                          double* out) noexcept nogil:
    cdef double scale = fabs(c4)
    cdef double raw[8]
    cdef int n_raw = 0, n = 0, i, j, it
    cdef double b, c, d, e, p, q, r, shift, m, s2m, half, x, f, df, step, tmp
    cdef double zbuf[2]
    cdef int nz

    if fabs(c3) > scale:
        scale = fabs(c3)
    if fabs(c2) > scale:
        scale = fabs(c2)
    if fabs(c1) > scale:
        scale = fabs(c1)
    if fabs(c0) > scale:
        scale = fabs(c0)
    if scale == 0.0:
        return 0

    if fabs(c4) <= 1e-14 * scale:
        if fabs(c3) <= 1e-14 * scale:
            if fabs(c2) <= 1e-14 * scale:
                if fabs(c1) > 1e-14 * scale:
                    raw[n_raw] = -c0 / c1
                    n_raw += 1
            else:
                n_raw = _quadratic_real_roots(c1 / c2, c0 / c2, raw, n_raw)
        else:
            b = c2 / c3
            c = c1 / c3
            d = c0 / c3
            m = _cubic_max_real_root(b, c, d)
            raw[n_raw] = m
            n_raw += 1
            n_raw = _quadratic_real_roots(b + m, c + m * (b + m), raw, n_raw)
    else:
        b = c3 / c4
        c = c2 / c4
        d = c1 / c4
        e = c0 / c4
        p = c - 0.375 * b * b
        q = d - 0.5 * b * c + 0.125 * b * b * b
        r = e - 0.25 * b * d + b * b * c / 16.0 - 3.0 * b * b * b * b / 256.0
        shift = -0.25 * b
        if fabs(q) <= 1e-13 * (1.0 + fabs(p) + sqrt(fabs(r))):
            nz = _quadratic_real_roots(p, r, zbuf, 0)
            for i in range(nz):
                if zbuf[i] >= 0:
                    raw[n_raw] = sqrt(zbuf[i]) + shift
                    raw[n_raw + 1] = -sqrt(zbuf[i]) + shift
                    n_raw += 2
                elif zbuf[i] > -1e-12 * (1.0 + fabs(p)):
                    raw[n_raw] = shift
                    n_raw += 1
        else:
            m = _cubic_max_real_root(p, 0.25 * p * p - r, -0.125 * q * q)
            if m > 0:
                s2m = sqrt(2.0 * m)
                half = 0.5 * p + m
                n_raw = _quadratic_real_roots(-s2m, half + 0.5 * q / s2m, raw, n_raw)
                n_raw = _quadratic_real_roots(s2m, half - 0.5 * q / s2m, raw, n_raw)
                for i in range(n_raw):
                    raw[i] += shift

    for i in range(n_raw):
        x = raw[i]
        for it in range(3):
            f = (((c4 * x + c3) * x + c2) * x + c1) * x + c0
            df = ((4.0 * c4 * x + 3.0 * c3) * x + 2.0 * c2) * x + c1
            if df == 0.0:
                break
            step = f / df
            x -= step
            if fabs(step) <= 1e-14 * (1.0 + fabs(x)):
                break
        raw[i] = x

    # insertion sort (n_raw <= 8)
    for i in range(1, n_raw):
        tmp = raw[i]
        j = i - 1
        while j >= 0 and raw[j] > tmp:
            raw[j + 1] = raw[j]
            j -= 1
        raw[j + 1] = tmp

    for i in range(n_raw):
        if n == 0 or fabs(raw[i] - out[n - 1]) > DEDUP_RTOL * (1.0 + fabs(raw[i])):
            out[n] = raw[i]
            n += 1
    return n


def quartic_roots(double c4, double c3, double c2, double c1, double c0):
    """Real roots of the quartic, ascending and deduplicated."""
    cdef double buf[8]
    cdef int n = _quartic_roots_c(c4, c3, c2, c1, c0, buf)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.empty(n, dtype=np.float64)
    cdef int i
    for i in range(n):
        arr[i] = buf[i]
    return arr


cdef bint _polish_distances(double* s, double a2, double b2, double c2,
                            double ca, double cb, double cg) noexcept nogil:
    cdef double scale = a2 + b2 + c2
    cdef double s1 = s[0], s2 = s[1], s3 = s[2]
    cdef double r0, r1, r2, det
    cdef double j00, j01, j02, j10, j11, j12, j20, j21, j22
    cdef double d0, d1, d2
    cdef int it
    for it in range(5):
        r0 = s2 * s2 + s3 * s3 - 2.0 * s2 * s3 * ca - a2
        r1 = s1 * s1 + s3 * s3 - 2.0 * s1 * s3 * cb - b2
        r2 = s1 * s1 + s2 * s2 - 2.0 * s1 * s2 * cg - c2
        if fabs(r0) + fabs(r1) + fabs(r2) <= 1e-14 * scale:
            break
        j00 = 0.0
        j01 = 2.0 * s2 - 2.0 * s3 * ca
        j02 = 2.0 * s3 - 2.0 * s2 * ca
        j10 = 2.0 * s1 - 2.0 * s3 * cb
        j11 = 0.0
        j12 = 2.0 * s3 - 2.0 * s1 * cb
        j20 = 2.0 * s1 - 2.0 * s2 * cg
        j21 = 2.0 * s2 - 2.0 * s1 * cg
        j22 = 0.0
        det = (j00 * (j11 * j22 - j12 * j21)
               - j01 * (j10 * j22 - j12 * j20)
               + j02 * (j10 * j21 - j11 * j20))
        if det == 0.0 or not isfinite(det):
            break
        # Cramer's rule on the 3x3 system J d = r
        d0 = (r0 * (j11 * j22 - j12 * j21)
              - j01 * (r1 * j22 - j12 * r2)
              + j02 * (r1 * j21 - j11 * r2)) / det
        d1 = (j00 * (r1 * j22 - j12 * r2)
              - r0 * (j10 * j22 - j12 * j20)
              + j02 * (j10 * r2 - r1 * j20)) / det
        d2 = (j00 * (j11 * r2 - r1 * j21)
              - j01 * (j10 * r2 - r1 * j20)
              + r0 * (j10 * j21 - j11 * j20)) / det
        s1 -= d0
        s2 -= d1
        s3 -= d2
    r0 = s2 * s2 + s3 * s3 - 2.0 * s2 * s3 * ca - a2
    r1 = s1 * s1 + s3 * s3 - 2.0 * s1 * s3 * cb - b2
    r2 = s1 * s1 + s2 * s2 - 2.0 * s1 * s2 * cg - c2
    if fabs(r0) + fabs(r1) + fabs(r2) > 1e-6 * scale:
        return False
    if s1 <= 0 or s2 <= 0 or s3 <= 0:
        return False
    s[0] = s1
    s[1] = s2
    s[2] = s3
    return True


def p3p_distance_sets(obj, bearings):
    """Grunert P3P distance triples; see the pure backend for the contract."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] o = np.ascontiguousarray(obj, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] f = np.ascontiguousarray(bearings, dtype=np.float64)
    cdef double a2 = 0.0, b2 = 0.0, c2 = 0.0, ca = 0.0, cb = 0.0, cg = 0.0
    cdef double diff
    cdef int i
    for i in range(3):
        diff = o[1, i] - o[2, i]
        a2 += diff * diff
        diff = o[0, i] - o[2, i]
        b2 += diff * diff
        diff = o[0, i] - o[1, i]
        c2 += diff * diff
        ca += f[1, i] * f[2, i]
        cb += f[0, i] * f[2, i]
        cg += f[0, i] * f[1, i]
    if a2 <= 0.0 or b2 <= 0.0 or c2 <= 0.0:
        return np.empty((0, 3))

    cdef double q_ = a2 / b2
    cdef double cc = c2 / b2
    cdef double a4 = cc * cc - 2.0 * cc * q_ - 4.0 * cc * ca * ca + 2.0 * cc + q_ * q_ - 2.0 * q_ + 1.0
    cdef double a3 = -4.0 * (cc * cc * cb - 2.0 * cc * q_ * cb - 2.0 * cc * ca * ca * cb
                             - cc * ca * cg + cc * cb + q_ * q_ * cb - q_ * ca * cg
                             - q_ * cb + ca * cg)
    cdef double a2c = 2.0 * (2.0 * cc * cc * cb * cb + cc * cc - 4.0 * cc * q_ * cb * cb
                             - 2.0 * cc * q_ - 2.0 * cc * ca * ca - 4.0 * cc * ca * cb * cg
                             + 2.0 * q_ * q_ * cb * cb + q_ * q_ - 4.0 * q_ * ca * cb * cg
                             - 2.0 * q_ * cg * cg + 2.0 * ca * ca + 2.0 * cg * cg - 1.0)
    cdef double a1 = -4.0 * (cc * cc * cb - 2.0 * cc * q_ * cb - cc * ca * cg - cc * cb
                             + q_ * q_ * cb - q_ * ca * cg - 2.0 * q_ * cb * cg * cg
                             + q_ * cb + ca * cg)
    cdef double a0 = cc * cc - 2.0 * cc * q_ - 2.0 * cc + q_ * q_ - 4.0 * q_ * cg * cg + 2.0 * q_ + 1.0

    cdef double roots[8]
    cdef int n_roots = _quartic_roots_c(a4, a3, a2c, a1, a0, roots)

    cdef double big_a = q_ - cc
    cdef double sets[16][3]
    cdef int n_sets = 0
    cdef double v, den_s1, denom, u, disc, s1, u_plus, u_minus, res_p, res_m
    cdef double triple[3]
    for i in range(n_roots):
        v = roots[i]
        if v <= 0:
            continue
        den_s1 = 1.0 + v * v - 2.0 * v * cb
        if den_s1 <= 0:
            continue
        denom = 2.0 * (cg - v * ca)
        if fabs(denom) > 1e-9 * (1.0 + fabs(v)):
            u = ((big_a - 1.0) * v * v - 2.0 * big_a * cb * v + big_a + 1.0) / denom
        else:
            disc = cg * cg - 1.0 + cc * den_s1
            if disc < 0:
                continue
            u_plus = cg + sqrt(disc)
            u_minus = cg - sqrt(disc)
            res_p = fabs(u_plus * u_plus + v * v - 2.0 * u_plus * v * ca - q_ * den_s1)
            res_m = fabs(u_minus * u_minus + v * v - 2.0 * u_minus * v * ca - q_ * den_s1)
            u = u_plus if res_p < res_m else u_minus
        if u <= 0:
            continue
        s1 = sqrt(b2 / den_s1)
        triple[0] = s1
        triple[1] = u * s1
        triple[2] = v * s1
        if not _polish_distances(triple, a2, b2, c2, ca, cb, cg):
            continue
        sets[n_sets][0] = triple[0]
        sets[n_sets][1] = triple[1]
        sets[n_sets][2] = triple[2]
        n_sets += 1

    if n_sets == 0:
        return np.empty((0, 3))

    # insertion sort by s1, then dedupe
    cdef int j, k
    cdef double t0, t1, t2
    for i in range(1, n_sets):
        t0 = sets[i][0]
        t1 = sets[i][1]
        t2 = sets[i][2]
        j = i - 1
        while j >= 0 and sets[j][0] > t0:
            sets[j + 1][0] = sets[j][0]
            sets[j + 1][1] = sets[j][1]
            sets[j + 1][2] = sets[j][2]
            j -= 1
        sets[j + 1][0] = t0
        sets[j + 1][1] = t1
        sets[j + 1][2] = t2

    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_sets, 3), dtype=np.float64)
    k = 0
    for i in range(n_sets):
        if k == 0 or fabs(sets[i][0] - out[k - 1, 0]) > DEDUP_RTOL * (1.0 + fabs(sets[i][0])):
            out[k, 0] = sets[i][0]
            out[k, 1] = sets[i][1]
            out[k, 2] = sets[i][2]
            k += 1
    return out[:k].copy()


def reprojection_errors(rotation, translation, obj, pixels,
                        double fx, double fy, double cx, double cy):
    """Per-point pixel reprojection error; inf where depth <= 0."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = np.ascontiguousarray(rotation, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(translation, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] o = np.ascontiguousarray(obj, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(pixels, dtype=np.float64)
    cdef Py_ssize_t n = o.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] err = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double x, y, z, u, v
    cdef double inf = np.inf
    for i in range(n):
        x = r[0, 0] * o[i, 0] + r[0, 1] * o[i, 1] + r[0, 2] * o[i, 2] + t[0]
        y = r[1, 0] * o[i, 0] + r[1, 1] * o[i, 1] + r[1, 2] * o[i, 2] + t[1]
        z = r[2, 0] * o[i, 0] + r[2, 1] * o[i, 1] + r[2, 2] * o[i, 2] + t[2]
        if z <= 0:
            err[i] = inf
            continue
        u = fx * x / z + cx - p[i, 0]
        v = fy * y / z + cy - p[i, 1]
        err[i] = hypot(u, v)
    return err


def reprojection_normal_eqs(rotation, translation, obj, pixels,
                            double fx, double fy, double cx, double cy):
    """Accumulate (JtJ, Jtr, cost, n_valid); see the pure backend."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = np.ascontiguousarray(rotation, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(translation, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] o = np.ascontiguousarray(obj, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(pixels, dtype=np.float64)
    cdef Py_ssize_t n = o.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] jtj = np.zeros((6, 6), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] jtr = np.zeros(6, dtype=np.float64)
    cdef double cost = 0.0
    cdef int n_valid = 0
    cdef Py_ssize_t i, a, bidx
    cdef double rx, ry, rz, x, y, z, invz, au, bu, av, cv, ru, rv
    cdef double ju[6]
    cdef double jv[6]
    for i in range(n):
        rx = r[0, 0] * o[i, 0] + r[0, 1] * o[i, 1] + r[0, 2] * o[i, 2]
        ry = r[1, 0] * o[i, 0] + r[1, 1] * o[i, 1] + r[1, 2] * o[i, 2]
        rz = r[2, 0] * o[i, 0] + r[2, 1] * o[i, 1] + r[2, 2] * o[i, 2]
        x = rx + t[0]
        y = ry + t[1]
        z = rz + t[2]
        if z <= 0:
            continue
        n_valid += 1
        invz = 1.0 / z
        au = fx * invz
        bu = -fx * x * invz * invz
        av = fy * invz
        cv = -fy * y * invz * invz
        ru = fx * x * invz + cx - p[i, 0]
        rv = fy * y * invz + cy - p[i, 1]
        # J rows for the (omega, dt) parameterization
        ju[0] = bu * ry
        ju[1] = au * rz - bu * rx
        ju[2] = -au * ry
        ju[3] = au
        ju[4] = 0.0
        ju[5] = bu
        jv[0] = -av * rz + cv * ry
        jv[1] = -cv * rx
        jv[2] = av * rx
        jv[3] = 0.0
        jv[4] = av
        jv[5] = cv
        for a in range(6):
            jtr[a] += ju[a] * ru + jv[a] * rv
            for bidx in range(a, 6):
                jtj[a, bidx] += ju[a] * ju[bidx] + jv[a] * jv[bidx]
        cost += ru * ru + rv * rv
    for a in range(6):
        for bidx in range(a + 1, 6):
            jtj[bidx, a] = jtj[a, bidx]
    return jtj, jtr, cost, n_valid


def points_in_box_mask(points, rotation, translation, half_extents):
    """Mask of points inside an oriented box (closed half-spaces)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = np.ascontiguousarray(rotation, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(translation, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] he = np.ascontiguousarray(half_extents, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] mask = np.empty(n, dtype=np.uint8)
    cdef Py_ssize_t i
    cdef double dx, dy, dz, lx, ly, lz
    for i in range(n):
        dx = pts[i, 0] - t[0]
        dy = pts[i, 1] - t[1]
        dz = pts[i, 2] - t[2]
        # local = R^T (p - t)
        lx = r[0, 0] * dx + r[1, 0] * dy + r[2, 0] * dz
        ly = r[0, 1] * dx + r[1, 1] * dy + r[2, 1] * dz
        lz = r[0, 2] * dx + r[1, 2] * dy + r[2, 2] * dz
        mask[i] = (fabs(lx) <= he[0]) and (fabs(ly) <= he[1]) and (fabs(lz) <= he[2])
    return mask.view(np.bool_)
