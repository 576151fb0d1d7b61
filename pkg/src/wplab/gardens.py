"""Half-flower gardens through the spiral-angle coordinate.

The quotient of the punctured basin by f_a is a torus; a garden is the
full preimage of an annulus on that torus.  Concretely, a point z
belongs to the garden when the spiral angle of phi_a(z), measured from
the singular angle theta_c of the critical value, falls in a sector of
relative width alpha.  That condition is invariant under f_a, so one
Koenigs evaluation decides membership, with no geometric tracing.
Flowers (the petals attached to the repelling cycle, joined at 0) and
the immediate pre-flower are probed by continuing the petal boundary
rays outward and collecting the preimages that were turned down.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .blaschke_core import (
    BlaschkeParam,
    KOENIGS_SERIES_TERMS,
    as_param,
    evaluate,
    inverse_images,
    koenigs_batch,
    koenigs_radius,
    koenigs_series,
)
from .circle_dynamics import Cycle, find_simple_cycle, rotation_word

MEASURE_SAMPLES = 1 << 14
INDETERMINATE_WARN_FRACTION = 0.01
PLATEAU_CI_FACTOR = 3.0
RAY_TRACE_TARGET = 0.999
RAY_TRACE_STEP_CAP = 10 ** 5
RAY_ENDPOINT_TOL = 0.05
SEPARATION_SAMPLE_CAP = 512
NEWTON_STEPS = 12


@dataclass(frozen=True)
class GardenFrame:
    """Everything needed for O(1) garden membership at parameter a.

    L is the principal logarithm of a^q, which is close to 0 in the
    degenerating regime a -> e(p/q); its slope fixes the spiral
    foliation of C*, and theta_c marks the spiral through the Koenigs
    image of the critical point, the singular ray of the coordinate.
    """

    a: BlaschkeParam
    p: int
    q: int
    alpha: float = 0.5
    L: complex = field(init=False)
    slope_ratio: float = field(init=False)
    theta_c: float = field(init=False)

    def __post_init__(self):
        par = as_param(self.a)
        object.__setattr__(self, "a", par)
        rotation_word(self.p, self.q)
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        L = cmath.log(par.a ** self.q)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "slope_ratio", L.imag / L.real)
        out = koenigs_batch(par, np.array([par.c]))
        if out.status[0] != 0:
            raise ArithmeticError(f"linearizer failed at the critical point of {par.a}")
        theta_c = self._reduce(out.im_log_phi[0] - out.log_abs_phi[0] * self.slope_ratio)
        object.__setattr__(self, "theta_c", theta_c)

    @property
    def sector(self) -> float:
        return 2.0 * math.pi / self.q

    def _reduce(self, theta: float) -> float:
        return theta % (2.0 * math.pi / self.q)

    @property
    def eta(self) -> float:
        return self.q ** 2 * (1.0 - abs(self.a.a))


def spiral_angle(frame: GardenFrame, w: complex) -> float:
    """Which spiral leaf through C* the point w sits on, in [0, 2pi/q).

    The value Im log w - Re log w * slope_ratio does not depend on the
    log branch once reduced mod 2pi/q, and multiplication by a shifts
    it by 2pi p/q, hence by zero after reduction.
    """
    w = complex(w)
    if w == 0:
        raise ValueError("spiral angle undefined at 0")
    lw = cmath.log(w)
    return frame._reduce(lw.imag - lw.real * frame.slope_ratio)


def _frac_from_logs(frame: GardenFrame, log_abs: np.ndarray, im_log: np.ndarray) -> np.ndarray:
    theta = np.mod(im_log - log_abs * frame.slope_ratio, frame.sector)
    return np.mod(theta - frame.theta_c, frame.sector) / frame.sector


def membership_fraction_batch(frame: GardenFrame, zs: np.ndarray
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Sector position of phi(z) for an array of points.

    Returns (frac, ok): frac in [0, 1) measured from the singular ray,
    and a mask of points where the linearizer converged.  Membership
    at width alpha is (1-alpha)/2 < frac < (1+alpha)/2.
    """
    out = koenigs_batch(frame.a, zs)
    ok = out.status == 0
    frac = _frac_from_logs(frame, out.log_abs_phi, out.im_log_phi)
    return frac, ok


def garden_membership_batch(frame: GardenFrame, zs: np.ndarray) -> np.ndarray:
    """Tri-state membership: 1 inside, 0 outside, -1 indeterminate."""
    frac, ok = membership_fraction_batch(frame, zs)
    lo = (1.0 - frame.alpha) / 2.0
    hi = (1.0 + frame.alpha) / 2.0
    result = np.where((frac > lo) & (frac < hi), np.int8(1), np.int8(0))
    result[~ok] = -1
    return result


def garden_membership(frame: GardenFrame, z: complex) -> Optional[bool]:
    """Scalar membership; None when the linearizer did not converge."""
    z = complex(z)
    if z == 0:
        raise ValueError("membership undefined at the fixed point 0")
    code = garden_membership_batch(frame, np.array([z]))[0]
    return None if code < 0 else bool(code)


@dataclass(frozen=True)
class CircleMeasure:
    r: float
    measure: float
    ci: float
    indeterminate_fraction: float
    n_samples: int


@dataclass(frozen=True)
class MeasurePlateau:
    r_values: tuple[float, ...]
    measures: np.ndarray
    cis: np.ndarray
    indeterminate_fractions: np.ndarray
    value: float
    stable: bool
    reason: str = ""


def circle_intersection_measure(frame: GardenFrame, r: float, n_samples: int = MEASURE_SAMPLES,
                                seed: int = 0) -> CircleMeasure:
    """Fraction of the circle of radius r inside the garden.

    Stratified Monte Carlo: one uniform draw per equal angular bin,
    from a counter-based generator so chunked or parallel evaluation
    cannot change the sample set.  The confidence interval is the
    plain binomial one, which the stratification only tightens.
    Indeterminate points are excluded from the proportion and
    reported; more than 1% of them is loud.
    """
    if not 0.0 < r < 1.0:
        raise ValueError("need 0 < r < 1")
    rng = np.random.Generator(np.random.Philox(seed))
    theta = 2.0 * math.pi * (np.arange(n_samples) + rng.random(n_samples)) / n_samples
    tri = garden_membership_batch(frame, r * np.exp(1j * theta))
    determinate = int(np.sum(tri >= 0))
    inside = int(np.sum(tri == 1))
    bad = 1.0 - determinate / n_samples
    if bad > INDETERMINATE_WARN_FRACTION:
        warnings.warn(f"{100 * bad:.2f}% of samples indeterminate at r = {r}",
                      stacklevel=2)
    if determinate == 0:
        return CircleMeasure(r=r, measure=math.nan, ci=math.inf,
                             indeterminate_fraction=bad, n_samples=n_samples)
    p = inside / determinate
    ci = 1.96 * math.sqrt(p * (1.0 - p) / determinate)
    return CircleMeasure(r=r, measure=p, ci=ci, indeterminate_fraction=bad,
                         n_samples=n_samples)


def measure_plateau(frame: GardenFrame, r_schedule: Sequence[float],
                    n_samples: int = MEASURE_SAMPLES, seed: int = 0) -> MeasurePlateau:
    """Garden circle measure along a radius schedule, with a plateau verdict.

    The trailing run of radii whose successive measures differ by less
    than PLATEAU_CI_FACTOR times the confidence interval counts as the
    plateau; its mean is the reported value.  A single-element run
    means no stabilization, which is reported rather than asserted
    away: the limit may genuinely oscillate.
    """
    if len(r_schedule) < 2:
        raise ValueError("plateau detection needs at least two radii")
    rows = [circle_intersection_measure(frame, r, n_samples=n_samples, seed=seed + i)
            for i, r in enumerate(r_schedule)]
    vals = np.array([row.measure for row in rows])
    cis = np.array([row.ci for row in rows])
    bads = np.array([row.indeterminate_fraction for row in rows])

    start = len(vals) - 1
    while start > 0:
        tol = PLATEAU_CI_FACTOR * max(cis[start], cis[start - 1])
        if abs(vals[start] - vals[start - 1]) < tol:
            start -= 1
        else:
            break
    run = vals[start:]
    stable = len(run) >= 2
    reason = "" if stable else (
        f"values keep moving: last step {abs(vals[-1] - vals[-2]):.3g} "
        f"exceeds {PLATEAU_CI_FACTOR} ci")
    return MeasurePlateau(r_values=tuple(r_schedule), measures=vals, cis=cis,
                          indeterminate_fractions=bads,
                          value=float(run.mean()), stable=stable, reason=reason)


class _SeriesPolynomial:
    """Horner evaluation of the linearizer series and its derivative."""

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = coeffs
        self.dcoeffs = coeffs[1:] * np.arange(1, len(coeffs))

    def __call__(self, z: complex) -> complex:
        acc = 0j
        for c in self.coeffs[::-1]:
            acc = acc * z + c
        return acc

    def deriv(self, z: complex) -> complex:
        acc = 0j
        for c in self.dcoeffs[::-1]:
            acc = acc * z + c
        return acc


@dataclass(frozen=True)
class FlowerReport:
    """Diagnostics from tracing the petal boundary rays outward."""

    cycle: Cycle
    eta: float
    endpoints: np.ndarray
    endpoint_max_distance: float
    endpoints_converged: bool
    separation: float
    separation_reference: float
    preflower_extent_K: float
    preflower_center: complex
    n_flower_samples: int
    n_preflower_samples: int


def _pairwise_min_hyperbolic(zs: np.ndarray, ws: np.ndarray) -> float:
    z = zs.reshape(-1, 1)
    w = ws.reshape(1, -1)
    t = np.abs((z - w) / (1.0 - np.conjugate(z) * w))
    t = np.minimum(t, 1.0 - 1e-16)
    return float(np.min(np.log((1.0 + t) / (1.0 - t))))


def _thin(samples: list[complex], cap: int) -> np.ndarray:
    arr = np.array(samples)
    if len(arr) > cap:
        arr = arr[:: len(arr) // cap + 1]
    return arr


def flower_diagnostics(frame: GardenFrame, trace_target: float = RAY_TRACE_TARGET,
                       step_cap: int = RAY_TRACE_STEP_CAP) -> FlowerReport:
    """Trace the 2q boundary rays of the half flower outward.

    Each ray starts inside the linearization disk on the spiral at
    theta_c +- alpha pi / q (one copy per sector sheet) and is continued
    outward one inverse branch at a time: w moves to w / a, and of the
    two preimages of the current point the one nearest the first-order
    prediction z + dw / phi'(z) continues the ray, phi' being updated
    through phi'(z_next) = phi'(z) f'(z_next) / a.  The discarded
    preimages sample the immediate pre-flower, giving the separation
    estimate and its extent around the radial projection of the
    critical point.
    """
    par = frame.a
    aa = par.a
    cyc = find_simple_cycle(par, frame.p, frame.q)
    series = koenigs_series(par, KOENIGS_SERIES_TERMS)
    poly = _SeriesPolynomial(series)
    r_seed = 0.5 * koenigs_radius(series)

    flower: list[complex] = []
    rejected: list[complex] = []
    endpoints = []
    converged = True
    for k in range(frame.q):
        for sign in (1.0, -1.0):
            theta_ray = frame.theta_c + sign * frame.alpha * math.pi / frame.q \
                + 2.0 * math.pi * k / frame.q
            x0 = math.log(r_seed)
            w = cmath.exp(complex(x0, theta_ray + x0 * frame.slope_ratio))
            z = w
            for _ in range(NEWTON_STEPS):
                z -= (poly(z) - w) / poly.deriv(z)
            dphi = poly.deriv(z)
            flower.append(z)
            steps = 0
            while abs(z) <= trace_target and steps < step_cap:
                w_next = w / aa
                z_pred = z + (w_next - w) / dphi
                w1, w2 = inverse_images(par, z)
                if abs(w1 - z_pred) <= abs(w2 - z_pred):
                    z_next, reject = w1, w2
                else:
                    z_next, reject = w2, w1
                rejected.append(reject)
                dphi = dphi * evaluate(par, z_next).f1 / aa
                z, w = z_next, w_next
                flower.append(z)
                steps += 1
            if abs(z) <= trace_target:
                converged = False
            endpoints.append(z)

    endpoints = np.array(endpoints)
    dist = np.abs(endpoints.reshape(-1, 1) - cyc.xi.reshape(1, -1))
    endpoint_max = float(dist.min(axis=1).max())

    c_hat = par.c / abs(par.c)
    eta = frame.eta
    rej = _thin(rejected, SEPARATION_SAMPLE_CAP)
    flw = _thin(flower, SEPARATION_SAMPLE_CAP)
    separation = _pairwise_min_hyperbolic(flw, rej)
    extent = float(np.max(np.abs(np.array(rejected) - c_hat)))
    k_const = extent / (par.delta_c * math.sqrt(eta))

    return FlowerReport(
        cycle=cyc, eta=eta, endpoints=endpoints,
        endpoint_max_distance=endpoint_max,
        endpoints_converged=converged,
        separation=separation,
        separation_reference=math.log(1.0 / eta),
        preflower_extent_K=k_const,
        preflower_center=c_hat,
        n_flower_samples=len(flower),
        n_preflower_samples=len(rejected),
    )
