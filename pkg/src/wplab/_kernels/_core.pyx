# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.

Two batch primitives live here: forward-orbit Koenigs data (log phi,
log phi' split into magnitude and angle) and the annulus entry test used
by laminated-area and saturation measurements.  Semantics are mirrored
exactly by wplab._kernels.fallback.
"""

from libc.math cimport atan2, log, sqrt

cdef extern from "math.h":
    double INFINITY


cdef inline double _abs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def koenigs_batch(double complex a, const double complex[::1] zs, double r_stop,
                  long n_max, const double complex[::1] series,
                  double[::1] log_abs_phi, double[::1] im_log_phi,
                  double[::1] log_abs_dphi, double[::1] arg_dphi,
                  long[::1] iterations, signed char[::1] status):
    """Fill the output arrays with Koenigs data for every point of ``zs``.

    Each point is iterated under f(z) = z (z + a) / (1 + conj(a) z) until
    |z| <= r_stop, the tail of the linearizer is then summed from the
    power series coefficients ``series`` (series[k] multiplies z^k,
    series[1] must be 1).  Status codes: 0 converged, 1 iteration budget
    exhausted before reaching r_stop, 2 pole hit (cannot happen from the
    open disk), 3 exact hit of the grand orbit of the origin.
    """
    cdef Py_ssize_t npts = zs.shape[0]
    cdef Py_ssize_t nser = series.shape[0]
    cdef double log_abs_a = 0.5 * log(_abs2(a))
    cdef double arg_a = atan2(a.imag, a.real)
    cdef double complex abar = a.real - a.imag * 1j
    cdef double r2 = r_stop * r_stop
    cdef Py_ssize_t i, k
    cdef long n
    cdef double complex z, den, fp, prod, phi_s, dphi_s, acc, dacc, combo
    cdef double m2, slog
    cdef signed char st

    with nogil:
        for i in range(npts):
            z = zs[i]
            n = 0
            prod = 1.0
            slog = 0.0
            st = 0
            while _abs2(z) > r2 and n < n_max:
                den = 1.0 + abar * z
                if _abs2(den) < 1e-60:
                    st = 2
                    break
                fp = (abar * z * z + 2.0 * z + a) / (den * den)
                prod = prod * fp
                m2 = _abs2(prod)
                if m2 > 1e200 or m2 < 1e-200:
                    slog += 0.5 * log(m2)
                    prod = prod / sqrt(m2)
                z = z * (z + a) / den
                n += 1
            if st == 0 and _abs2(z) > r2:
                st = 1

            acc = series[nser - 1]
            dacc = (nser - 1.0) * series[nser - 1]
            for k in range(nser - 2, 0, -1):
                acc = acc * z + series[k]
                dacc = dacc * z + <double>k * series[k]
            phi_s = acc * z
            dphi_s = dacc

            if _abs2(phi_s) == 0.0:
                if st == 0:
                    st = 3
                log_abs_phi[i] = -INFINITY
                im_log_phi[i] = 0.0
            else:
                log_abs_phi[i] = -n * log_abs_a + 0.5 * log(_abs2(phi_s))
                im_log_phi[i] = -n * arg_a + atan2(phi_s.imag, phi_s.real)
            combo = dphi_s * prod
            if _abs2(combo) == 0.0:
                log_abs_dphi[i] = -INFINITY
                arg_dphi[i] = 0.0
            else:
                log_abs_dphi[i] = -n * log_abs_a + slog + 0.5 * log(_abs2(combo))
                arg_dphi[i] = -n * arg_a + atan2(combo.imag, combo.real)
            iterations[i] = n
            status[i] = st


def orbit_enter_batch(double complex a, const double complex[::1] zs,
                      double u1, double u2, double t1, double t2, long cap,
                      signed char[::1] result, long[::1] steps):
    """Forward-orbit membership in the saturation of an annular box.

    The box is E = {u1 < 1 - |z| < u2} intersected with {t1 < arg z < t2},
    angles in [0, 2pi).  Because 1 - |z| never decreases along forward
    orbits, the test terminates once the orbit passes the outer depth u2.
    Results: 1 entered E, 0 escaped past u2 without entering, -1 budget.
    """
    cdef Py_ssize_t npts = zs.shape[0]
    cdef double twopi = 6.283185307179586476925287
    cdef Py_ssize_t i
    cdef long n
    cdef double complex z, den, abar = a.real - a.imag * 1j
    cdef double rr, eps, th
    cdef signed char res

    with nogil:
        for i in range(npts):
            z = zs[i]
            n = 0
            res = -1
            while n < cap:
                rr = sqrt(_abs2(z))
                eps = 1.0 - rr
                if eps <= 1e-17:
                    res = 0
                    break
                if eps > u1 and eps < u2:
                    th = atan2(z.imag, z.real)
                    if th < 0.0:
                        th += twopi
                    if th > t1 and th < t2:
                        res = 1
                        break
                if eps >= u2:
                    res = 0
                    break
                den = 1.0 + abar * z
                z = z * (z + a) / den
                n += 1
            result[i] = res
            steps[i] = n
