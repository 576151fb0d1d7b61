"""Vectorized numpy implementation of the kernel primitives.

Matches the semantics of the compiled extension: same status codes, same
stopping rules, same series tail.  Kept dependency free so the package
works without a C compiler.
"""

import numpy as np

_TWO_PI = 2.0 * np.pi


def koenigs_batch(a, zs, r_stop, n_max, series,
                  log_abs_phi, im_log_phi, log_abs_dphi, arg_dphi,
                  iterations, status):
    abar = np.conj(a)
    log_abs_a = np.log(abs(a))
    arg_a = np.arctan2(a.imag, a.real)
    r2 = r_stop * r_stop

    z = np.array(zs, dtype=np.complex128, copy=True)
    n = np.zeros(z.shape, dtype=np.int64)
    prod = np.ones(z.shape, dtype=np.complex128)
    slog = np.zeros(z.shape, dtype=np.float64)
    st = np.zeros(z.shape, dtype=np.int8)

    def _abs2(w):
        return w.real * w.real + w.imag * w.imag

    active = _abs2(z) > r2
    while active.any():
        za = z[active]
        den = 1.0 + abar * za
        pole = _abs2(den) < 1e-60
        if pole.any():
            idx = np.flatnonzero(active)[pole]
            st[idx] = 2
            sub = active.copy()
            sub[idx] = False
            active = sub
            za = z[active]
            den = 1.0 + abar * za
        if not active.any():
            break
        fp = (abar * za * za + 2.0 * za + a) / (den * den)
        pa = prod[active] * fp
        m2 = _abs2(pa)
        big = (m2 > 1e200) | (m2 < 1e-200)
        if big.any():
            root = np.sqrt(m2[big])
            slog_a = slog[active]
            slog_a[big] += np.log(root)
            slog[active] = slog_a
            pa[big] /= root
        prod[active] = pa
        z[active] = za * (za + a) / den
        n[active] += 1
        active = active & (_abs2(z) > r2) & (n < n_max)

    st[(st == 0) & (_abs2(z) > r2)] = 1

    nser = len(series)
    acc = np.full(z.shape, series[nser - 1], dtype=np.complex128)
    dacc = np.full(z.shape, (nser - 1.0) * series[nser - 1], dtype=np.complex128)
    for k in range(nser - 2, 0, -1):
        acc = acc * z + series[k]
        dacc = dacc * z + k * series[k]
    phi_s = acc * z
    dphi_s = dacc

    zero_phi = phi_s == 0
    st[zero_phi & (st == 0)] = 3
    with np.errstate(divide="ignore", invalid="ignore"):
        log_abs_phi[...] = np.where(
            zero_phi, -np.inf, -n * log_abs_a + np.log(np.abs(phi_s)))
        im_log_phi[...] = np.where(
            zero_phi, 0.0, -n * arg_a + np.arctan2(phi_s.imag, phi_s.real))
        combo = dphi_s * prod
        zero_d = combo == 0
        log_abs_dphi[...] = np.where(
            zero_d, -np.inf, -n * log_abs_a + slog + np.log(np.abs(combo)))
        arg_dphi[...] = np.where(
            zero_d, 0.0, -n * arg_a + np.arctan2(combo.imag, combo.real))
    iterations[...] = n
    status[...] = st


def orbit_enter_batch(a, zs, u1, u2, t1, t2, cap, result, steps):
    abar = np.conj(a)
    z = np.array(zs, dtype=np.complex128, copy=True)
    n = np.zeros(z.shape, dtype=np.int64)
    res = np.full(z.shape, -1, dtype=np.int8)
    open_mask = np.ones(z.shape, dtype=bool)

    k = 0
    while open_mask.any() and k < cap:
        za = z[open_mask]
        eps = 1.0 - np.abs(za)
        decided = np.full(za.shape, -1, dtype=np.int8)
        decided[eps <= 1e-17] = 0
        inside_depth = (eps > u1) & (eps < u2) & (decided < 0)
        if inside_depth.any():
            th = np.mod(np.angle(za[inside_depth]), _TWO_PI)
            hit = (th > t1) & (th < t2)
            tmp = decided[inside_depth]
            tmp[hit] = 1
            decided[inside_depth] = tmp
        decided[(eps >= u2) & (decided < 0)] = 0

        done = decided >= 0
        if done.any():
            idx = np.flatnonzero(open_mask)[done]
            res[idx] = decided[done]
            open_mask[idx] = False
        if not open_mask.any():
            break
        za = z[open_mask]
        z[open_mask] = za * (za + a) / (1.0 + abar * za)
        n[open_mask] += 1
        k += 1

    result[...] = res
    steps[...] = n
