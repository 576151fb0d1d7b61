"""Hyperbolic geometry on the unit disk and upper half plane.

The disk carries the metric 2 |dz| / (1 - |z|^2).  Horoballs are indexed
by a rational tangency angle p/q and a Euclidean diameter parameter eta,
the realized diameter being eta / q^2.  On the half plane, reduction to
the standard fundamental domain of SL(2, Z) yields the maximal horoball
height h and the slope p/q realizing it, which drive the invariant model
densities rho_alpha.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

MAX_REDUCTION_STEPS = 256
# slope (1, 0) denotes the cusp at infinity
_INF_SLOPE = (1, 0)


def _as_point(z) -> complex:
    if isinstance(z, DiskPoint):
        return z.z
    return complex(z)


@dataclass(frozen=True)
class DiskPoint:
    """A point strictly inside the unit disk."""

    z: complex

    def __post_init__(self):
        if abs(self.z) >= 1.0:
            raise ValueError(f"point {self.z} is not inside the unit disk")

    def __complex__(self) -> complex:
        return self.z


@dataclass(frozen=True)
class HoroballCoord:
    """Coordinates on the horocycle resting on e(p/q).

    eta is the Euclidean-diameter parameter (realized diameter eta/q^2)
    and s the angle along the tangency circle measured from the deepest
    point, so s = 0 is the radial point e(p/q) (1 - eta/q^2).
    """

    p: int
    q: int
    eta: float
    s: float = 0.0

    def __post_init__(self):
        if self.q <= 0 or math.gcd(self.p, self.q) != 1:
            raise ValueError(f"{self.p}/{self.q} is not a reduced fraction")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.eta / self.q ** 2 >= 2:
            raise ValueError("horoball leaves the disk")


@dataclass(frozen=True)
class ModelMetricPoint:
    """Reduced data of a half-plane point: maximal horoball height and slope.

    slope is a coprime pair (p, q); (1, 0) stands for the cusp at
    infinity, in which case h equals Im tau.
    """

    tau: complex
    alpha: float
    h: float
    slope: tuple[int, int]


def hyperbolic_distance_disk(z1, z2) -> float:
    """Distance in the 2 |dz| / (1 - |z|^2) metric.

    Equals 2 artanh of the pseudo-hyperbolic distance
    |(z1 - z2) / (1 - conj(z1) z2)|.
    """
    w1, w2 = _as_point(z1), _as_point(z2)
    if abs(w1) >= 1 or abs(w2) >= 1:
        raise ValueError("arguments must lie strictly inside the disk")
    t = abs((w1 - w2) / (1.0 - w1.conjugate() * w2))
    return math.log((1.0 + t) / (1.0 - t))


def horocycle_point(coord: HoroballCoord) -> complex:
    """Realize a HoroballCoord as a point of the disk."""
    zeta = cmath.exp(2j * math.pi * coord.p / coord.q)
    d = coord.eta / coord.q ** 2
    center = zeta * (1.0 - d / 2.0)
    return center + (d / 2.0) * zeta * cmath.exp(1j * (math.pi + coord.s))


def _apply_sl2(mat, tau: complex) -> complex:
    a, b, c, d = mat
    return (a * tau + b) / (c * tau + d)


def sl2_reduce(tau: complex, q_max: int = 0) -> ModelMetricPoint:
    """Maximal horoball height over all slopes, by Gauss reduction.

    Translates Re tau into [-1/2, 1/2] and inverts while |tau| < 1, for
    at most MAX_REDUCTION_STEPS rounds.  The height is Im of the reduced
    point and the slope is where the cusp at infinity came from.  Passing
    q_max > 0 additionally runs the exhaustive search over all coprime
    q <= q_max and raises ArithmeticError on disagreement.
    """
    if tau.imag <= 0:
        raise ValueError("tau must lie in the upper half plane")
    t = tau
    a, b, c, d = 1, 0, 0, 1
    for _ in range(MAX_REDUCTION_STEPS):
        n = round(t.real)
        if n:
            t -= n
            a, b = a - n * c, b - n * d
        if abs(t) < 1.0 - 1e-15:
            t = -1.0 / t
            a, b, c, d = -c, -d, a, b
        else:
            break
    h = t.imag
    if c == 0:
        slope = _INF_SLOPE
    elif c > 0:
        slope = (-d, c)
    else:
        slope = (d, -c)

    # deterministic tie-break: prefer the smallest q achieving the height
    if slope != _INF_SLOPE:
        if tau.imag >= h * (1.0 - 1e-12):
            h, slope = tau.imag, _INF_SLOPE
        else:
            for q in range(1, slope[1]):
                p0 = round(q * tau.real)
                for p in (p0 - 1, p0, p0 + 1):
                    if math.gcd(p, q) != 1:
                        continue
                    cand = tau.imag / abs(q * tau - p) ** 2
                    if cand >= h * (1.0 - 1e-12):
                        h, slope = cand, (p, q)
                        break
                else:
                    continue
                break

    if q_max > 0:
        hb, sb = _brute_force_height(tau, q_max)
        if abs(hb - h) > 1e-9 * max(h, 1.0):
            raise ArithmeticError(
                f"reduction height {h} disagrees with brute force {hb} at {tau}")
    return ModelMetricPoint(tau=tau, alpha=1.0, h=h, slope=slope)


def _brute_force_height(tau: complex, q_max: int) -> tuple[float, tuple[int, int]]:
    best_h, best_slope = tau.imag, _INF_SLOPE
    for q in range(1, q_max + 1):
        p0 = round(q * tau.real)
        for p in range(p0 - 3, p0 + 4):
            if math.gcd(p, q) != 1:
                continue
            cand = tau.imag / abs(q * tau - p) ** 2
            if cand > best_h * (1.0 + 1e-12):
                best_h, best_slope = cand, (p, q)
    return best_h, best_slope


def model_metric_rho_alpha(tau: complex, alpha: float) -> float:
    """Invariant density: hyperbolic outside the unit horoballs, suppressed
    by the alpha power of the height inside."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    h = sl2_reduce(tau).h
    return (1.0 / tau.imag) * min(1.0, h ** (-alpha))


def teichmuller_density(a) -> float:
    """Density of the metric |da| / (|a| log |a|^2) at the parameter a."""
    mod = abs(getattr(a, "a", a))
    if mod == 0 or mod >= 1:
        raise ValueError("parameter must satisfy 0 < |a| < 1")
    return 1.0 / (mod * math.log(1.0 / mod ** 2))


@dataclass(frozen=True)
class MobiusDisk:
    """Disk automorphism z -> e^{i theta} (z - b) / (1 - conj(b) z)."""

    b: complex
    theta: float = 0.0
    _phase: complex = field(init=False, repr=False)

    def __post_init__(self):
        if abs(self.b) >= 1:
            raise ValueError("b must lie inside the disk")
        object.__setattr__(self, "_phase", cmath.exp(1j * self.theta))

    def __call__(self, z):
        return self._phase * (z - self.b) / (1.0 - self.b.conjugate() * z)

    def deriv(self, z):
        return self._phase * (1.0 - abs(self.b) ** 2) / (1.0 - self.b.conjugate() * z) ** 2

    def inverse(self) -> "MobiusDisk":
        # the map sending gamma(0) = -e^{i theta} b back to 0
        return MobiusDisk(b=-self._phase * self.b, theta=-self.theta)


def random_disk_automorphism(rng) -> MobiusDisk:
    """Draw a disk automorphism with |b| <= 0.8 and uniform rotation."""
    r = 0.8 * math.sqrt(rng.uniform(0, 1))
    phi = rng.uniform(0, 2 * math.pi)
    return MobiusDisk(b=r * cmath.exp(1j * phi), theta=rng.uniform(0, 2 * math.pi))


def random_sl2(rng, n_factors: int = 8) -> tuple[int, int, int, int]:
    """Random SL(2, Z) element as a short word in the standard generators."""
    mat = (1, 0, 0, 1)
    for _ in range(n_factors):
        if rng.uniform(0, 1) < 0.5:
            n = rng.integers(-3, 4)
            gen = (1, int(n), 0, 1)
        else:
            gen = (0, -1, 1, 0)
        a, b, c, d = mat
        e, f, g, h = gen
        mat = (e * a + f * c, e * b + f * d, g * a + h * c, g * b + h * d)
    return mat


def apply_sl2(mat, tau: complex) -> complex:
    """Act on the upper half plane by a matrix (a, b, c, d)."""
    return _apply_sl2(mat, tau)
