"""The degree-2 Blaschke family f_a(z) = z (z + a) / (1 + conj(a) z).

Every member fixes the origin with multiplier a, fixes the unit circle
as a set, and carries one interior critical point c.  This module
evaluates the map with its first two derivatives, locates c, inverts
the two branches stably, iterates orbits, and computes the Koenigs
linearizer phi (phi(f(z)) = a phi(z), phi'(0) = 1).  The linearizer is
evaluated through its power series at a small adaptive radius instead
of the raw limit a^{-n} f^n(z), which gains several digits near the
unit circle where orbits shadow repelling cycles for a long time.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import _kernels
from ._kernels import KoenigsBatch

KOENIGS_SERIES_TERMS = 48
KOENIGS_MAX_ITER = 10 ** 6
KOENIGS_TOL = 1e-12
# fixed bracket for the series evaluation radius
KOENIGS_RADIUS_MIN = 0.05
KOENIGS_RADIUS_MAX = 0.45
DOUBLE_ROOT_EPS = 1e-14
EVAL_POLE_EPS = 1e-15


@dataclass(frozen=True)
class BlaschkeParam:
    """Parameter a with the derived critical data cached.

    c is the critical point inside the disk and delta_c = 1 - |c| its
    Euclidean gap to the circle, the small scale of the whole family.
    """

    a: complex
    c: complex = field(init=False)
    delta_c: float = field(init=False)

    def __post_init__(self):
        a = complex(self.a)
        if not 0.0 < abs(a) < 1.0:
            raise ValueError(f"need 0 < |a| < 1, got |a| = {abs(a)}")
        object.__setattr__(self, "a", a)
        c = (-1.0 + math.sqrt(1.0 - abs(a) ** 2)) / a.conjugate()
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "delta_c", 1.0 - abs(c))


def as_param(a) -> BlaschkeParam:
    """Coerce a bare complex number to a BlaschkeParam."""
    if isinstance(a, BlaschkeParam):
        return a
    return BlaschkeParam(a=a)


class MapAtPoint(NamedTuple):
    f: complex
    f1: complex
    f2: complex


class OrbitResult(NamedTuple):
    points: np.ndarray
    entered: bool


@dataclass(frozen=True)
class InversePair:
    """The two preimages of a point, with w1 the numerically stable root."""

    w1: complex
    w2: complex
    is_double: bool = False

    def __iter__(self):
        yield self.w1
        yield self.w2


@dataclass(frozen=True)
class KoenigsValue:
    """phi and phi' at one point, with the orbit log of phi.

    log_phi is accumulated additively along the computed orbit, so its
    imaginary part is a continuous branch rather than a principal value.
    """

    phi: complex
    dphi: complex
    log_phi: complex
    iterations: int
    converged: bool


def evaluate(a, z) -> MapAtPoint:
    """f, f', f'' at a point; f'' uses 2 (1 - |a|^2) / (1 + conj(a) z)^3."""
    aa = as_param(a).a
    z = complex(z)
    den = 1.0 + aa.conjugate() * z
    if abs(den) < EVAL_POLE_EPS:
        raise ZeroDivisionError(f"z = {z} hits the pole of f at -1/conj(a)")
    f = z * (z + aa) / den
    f1 = (aa.conjugate() * z * z + 2.0 * z + aa) / (den * den)
    f2 = 2.0 * (1.0 - abs(aa) ** 2) / (den * den * den)
    return MapAtPoint(f, f1, f2)


def apply_map(a, z):
    """f_a on a numpy array (or scalar), without derivatives."""
    aa = as_param(a).a
    return z * (z + aa) / (1.0 + np.conjugate(aa) * z)


def critical_point(a) -> complex:
    """The unique critical point inside the disk.

    Root of conj(a) z^2 + 2 z + a chosen inside, in the closed form
    (-1 + sqrt(1 - |a|^2)) / conj(a).
    """
    return as_param(a).c


def boundary_fixed_point(a) -> complex:
    """The repelling fixed point (1 - a) / (1 - conj(a)) on the circle."""
    aa = as_param(a).a
    return (1.0 - aa) / (1.0 - aa.conjugate())


def boundary_derivative_modulus(a, zeta) -> float:
    """|f'| on the unit circle: 1 + (1 - |a|^2) / |zeta + a|^2."""
    aa = as_param(a).a
    return 1.0 + (1.0 - abs(aa) ** 2) / abs(zeta + aa) ** 2


def inverse_images(a, z) -> InversePair:
    """Both solutions of f(w) = z, as roots of w^2 + (a - conj(a) z) w - z.

    The first root is extracted with the sign choice that avoids
    cancellation and the second via Vieta (w1 w2 = -z), so both stay
    accurate when the roots have very different sizes.
    """
    aa = as_param(a).a
    z = complex(z)
    b = aa - aa.conjugate() * z
    disc = b * b + 4.0 * z
    rt = cmath.sqrt(disc)
    if (b.conjugate() * rt).real < 0.0:
        rt = -rt
    w1 = -(b + rt) / 2.0
    w2 = -b if w1 == 0 else -z / w1
    return InversePair(w1=w1, w2=w2, is_double=abs(disc) < DOUBLE_ROOT_EPS)


def inverse_images_batch(a, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inverse_images; returns the two root arrays."""
    aa = as_param(a).a
    z = np.asarray(z, dtype=complex)
    b = aa - np.conjugate(aa) * z
    disc = b * b + 4.0 * z
    rt = np.sqrt(disc)
    rt = np.where((np.conjugate(b) * rt).real < 0.0, -rt, rt)
    w1 = -(b + rt) / 2.0
    degenerate = w1 == 0
    w2 = np.where(degenerate, -b, -z / np.where(degenerate, 1.0, w1))
    return w1, w2


def orbit(a, z, n_max: int = 10 ** 4, stop_radius: float = 0.1) -> OrbitResult:
    """Forward orbit until it enters B(0, stop_radius) or n_max steps pass.

    The radius |z_k| need not decrease monotonically near the circle;
    entry into the stopping ball is what the flag certifies.  Hitting
    n_max first is truncation, reported through entered=False.
    """
    aa = as_param(a).a
    z = complex(z)
    if abs(z) >= 1.0:
        raise ValueError("orbit starts strictly inside the disk")
    pts = [z]
    entered = abs(z) < stop_radius
    while not entered and len(pts) <= n_max:
        z = z * (z + aa) / (1.0 + aa.conjugate() * z)
        pts.append(z)
        entered = abs(z) < stop_radius
    return OrbitResult(points=np.array(pts), entered=entered)


def map_series(a, n_terms: int) -> np.ndarray:
    """Taylor coefficients of f at 0: f_1 = a, f_j = (-conj(a))^{j-2} (1 - |a|^2)."""
    aa = as_param(a).a
    f = np.zeros(n_terms + 1, dtype=complex)
    f[1] = aa
    if n_terms >= 2:
        j = np.arange(2, n_terms + 1)
        f[2:] = (-aa.conjugate()) ** (j - 2) * (1.0 - abs(aa) ** 2)
    return f


def koenigs_series(a, n_terms: int = KOENIGS_SERIES_TERMS) -> np.ndarray:
    """Power series of the linearizer, p_1 = 1.

    Matching coefficients in phi(f(w)) = a phi(w) gives
    p_n = (sum_{k<n} p_k [w^n] f(w)^k) / (a - a^n); the numerator and
    the denominator both shrink like 1 - |a|^2 as a approaches the
    circle, so the recursion stays well conditioned there.
    """
    aa = as_param(a).a
    f = map_series(aa, n_terms)
    powers = np.zeros((n_terms + 1, n_terms + 1), dtype=complex)
    powers[1] = f
    for k in range(2, n_terms + 1):
        powers[k] = np.convolve(powers[k - 1], f)[: n_terms + 1]
    p = np.zeros(n_terms + 1, dtype=complex)
    p[1] = 1.0
    for n in range(2, n_terms + 1):
        p[n] = (p[1:n] @ powers[1:n, n]) / (aa - aa ** n)
    return p


def koenigs_radius(series: np.ndarray, tol: float = 1e-16) -> float:
    """Largest bracketed radius at which the series tail is below tol."""
    mags = np.abs(series)
    n = len(series) - 1
    ks = np.arange(n + 1, dtype=float)
    r = KOENIGS_RADIUS_MAX
    while r > KOENIGS_RADIUS_MIN:
        # crude geometric tail bound off the last few terms
        tail = mags[-6:] * r ** ks[-6:]
        if tail.max() * n < tol:
            return r
        r *= 0.85
    return KOENIGS_RADIUS_MIN


@lru_cache(maxsize=64)
def _koenigs_setup(a: complex, n_terms: int) -> tuple[np.ndarray, float]:
    series = koenigs_series(a, n_terms)
    series.setflags(write=False)
    return series, koenigs_radius(series)


def koenigs_batch(a, zs: np.ndarray, n_max: int = KOENIGS_MAX_ITER) -> KoenigsBatch:
    """Kernel-backed linearizer logs for an array of points.

    Returns log |phi|, the orbit-continuous Im log phi, and the same
    pair for phi', along with iteration counts and status codes
    (0 converged, 1 truncated, 2 pole hit, 3 phi = 0).
    """
    par = as_param(a)
    series, r_stop = _koenigs_setup(par.a, KOENIGS_SERIES_TERMS)
    zs = np.ascontiguousarray(np.asarray(zs, dtype=complex).ravel())
    return _kernels.koenigs_batch(par.a, zs, r_stop, n_max, series)


def _safe_exp(w: complex) -> complex:
    if w.real > 700.0:
        return cmath.rect(math.inf, w.imag)
    if w.real == -math.inf:
        return 0j
    return cmath.exp(complex(w.real, w.imag))


def koenigs(a, z, tol: float = KOENIGS_TOL, n_max: int = KOENIGS_MAX_ITER) -> KoenigsValue:
    """Linearizer value at one point.

    z = 0 returns phi = 0, dphi = 1 by the normalization.  A derivative
    that comes back essentially zero means z sits on (or numerically on)
    the grand orbit of the critical point; that is warned about, not an
    error, since phi itself is still fine there.
    """
    z = complex(z)
    if z == 0:
        return KoenigsValue(phi=0j, dphi=1.0 + 0j, log_phi=complex(-math.inf, 0.0),
                            iterations=0, converged=True)
    out = koenigs_batch(a, np.array([z]), n_max=n_max)
    log_phi = complex(out.log_abs_phi[0], out.im_log_phi[0])
    log_dphi = complex(out.log_abs_dphi[0], out.arg_dphi[0])
    phi = _safe_exp(log_phi)
    dphi = _safe_exp(log_dphi)
    status = int(out.status[0])
    if status == 0 and abs(dphi) < 1e-13:
        warnings.warn(f"phi'({z}) ~ 0; the point may lie on the critical grand orbit",
                      stacklevel=2)
    return KoenigsValue(phi=phi, dphi=dphi, log_phi=log_phi,
                        iterations=int(out.iterations[0]), converged=status == 0)


def koenigs_residual(a, z, n_max: int = KOENIGS_MAX_ITER) -> float:
    """Relative defect |phi(f(z)) - a phi(z)| / |phi(z)| of the conjugacy."""
    aa = as_param(a).a
    z = complex(z)
    fz = evaluate(aa, z).f
    out = koenigs_batch(a, np.array([z, fz]), n_max=n_max)
    la, lf = (complex(out.log_abs_phi[i], out.im_log_phi[i]) for i in (0, 1))
    # compare in log scale to survive huge |phi|
    return abs(cmath.exp(lf - la) - aa)
