"""Limiting vector fields of radial degenerations and their flows.

As a approaches a root of unity e(p/q) along a horocycle, the return map
f_a^(q) drifts away from the identity at rate 1 - |a|^q, and the drift
direction converges to a holomorphic vector field kappa on the closed disk.
This module evaluates kappa in two independent ways (a driving measure on
the circle, and a closed form obtained by pulling back kappa_1 through
z -> (-1)^(q+1) z^q), integrates the flow it generates, and measures how
fast the actual iterates of f_a approach that flow.

Conventions.  The measure form is

    kappa(z) = -z * sum_j m_j (zeta_j - z)/(zeta_j + z) + i T z,

with unit-mass atoms m_j at points zeta_j on the circle and a real
rotational factor T.  Atoms sit at the q-th roots of unity, so the poles
of kappa sit at their antipodes; for q = 1 this reproduces
kappa_1(z) = z(z-1)/(z+1), the unambiguous limit of (f_a(x) - x)/(1 - a).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .blaschke_core import apply_map, as_param

# Pole-proximity radius below which kappa evaluation is refused.
POLE_EPS = 1e-9
# Flow integration: relative tolerance for RK4 step doubling, the fraction
# of the distance-to-poles used as the step ceiling, and the abort radius.
FLOW_RTOL = 1e-9
FLOW_STEP_FRAC = 0.01
FLOW_POLE_ABORT = 1e-6
FLOW_MIN_STEP = 1e-14
# Euler/partition families abort once an orbit leaves this ball.
ANALYTICITY_RADIUS = 4.0
# Default eta for the flow-side Koenigs map and its consistency gate.
KOENIGS_VF_ETA = 1e-4
KOENIGS_VF_REL_TOL = 1e-4


@dataclass(frozen=True)
class DrivingMeasure:
    """Atomic measure on the unit circle plus a rotational factor.

    atoms hold (position, mass) pairs with unit-modulus positions and
    positive masses summing to 1; trace is the real coefficient T of the
    extra rotation i T z.
    """

    atoms: tuple[tuple[complex, float], ...]
    trace: float = 0.0

    def __post_init__(self) -> None:
        total = 0.0
        for zeta, mass in self.atoms:
            if abs(abs(zeta) - 1.0) > 1e-12:
                raise ValueError(f"atom position {zeta} is not on the unit circle")
            if mass <= 0.0:
                raise ValueError(f"atom mass {mass} must be positive")
            total += mass
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom masses sum to {total}, expected 1")

    @property
    def poles(self) -> tuple[complex, ...]:
        """Poles of kappa: the antipodes of the atoms."""
        return tuple(-zeta for zeta, _ in self.atoms)


@dataclass(frozen=True)
class VectorFieldModel:
    """A vector field given by a driving measure, a closed form, or both.

    q > 0 selects the closed form z*(g - 1)/(g + 1) + i T z with
    g = (-1)^(q+1) z^q; a measure supplies the integral form.  When both
    are present they describe the same field and kappa_eval prefers the
    closed form.
    """

    measure: DrivingMeasure | None = None
    q: int = 0
    trace: float = 0.0

    def __post_init__(self) -> None:
        if self.measure is None and self.q <= 0:
            raise ValueError("need a driving measure or a positive q")

    @property
    def pole_angles(self) -> tuple[float, ...]:
        return tuple(sorted(cmath.phase(p) for p in self.poles))

    @property
    def poles(self) -> tuple[complex, ...]:
        if self.q > 0:
            # Antipodes of the q-th roots of unity.
            return tuple(
                -cmath.exp(2j * math.pi * k / self.q) for k in range(self.q)
            )
        assert self.measure is not None
        return self.measure.poles


def roots_of_unity_measure(q: int, trace: float = 0.0) -> DrivingMeasure:
    """Equal atoms of mass 1/q at the q-th roots of unity."""
    if q <= 0:
        raise ValueError("q must be a positive integer")
    atoms = tuple(
        (cmath.exp(2j * math.pi * k / q), 1.0 / q) for k in range(q)
    )
    return DrivingMeasure(atoms=atoms, trace=trace)


def limit_model(q: int, trace: float = 0.0) -> VectorFieldModel:
    """The model for the degeneration a -> e(p/q), in both forms at once."""
    return VectorFieldModel(
        measure=roots_of_unity_measure(q, trace), q=q, trace=trace
    )


def _check_pole_distance(model: VectorFieldModel, z: np.ndarray) -> None:
    for pole in model.poles:
        d = np.abs(z - pole)
        if np.any(d < POLE_EPS):
            raise ArithmeticError(f"evaluation within {POLE_EPS} of pole {pole}")


def kappa_measure(measure: DrivingMeasure, z):
    """Integral form -z * sum m (zeta - z)/(zeta + z) + i T z."""
    z = np.asarray(z, dtype=complex)
    acc = np.zeros_like(z)
    for zeta, mass in measure.atoms:
        acc = acc + mass * (zeta - z) / (zeta + z)
    out = -z * acc + 1j * measure.trace * z
    return out if out.shape else complex(out)


def kappa_closed(q: int, z, trace: float = 0.0):
    """Closed form z*(g - 1)/(g + 1) + i T z with g = (-1)^(q+1) z^q.

    Equals q * kappa_1(g)/g' after simplification, the pullback of the
    one-atom field through the degree-q power map.
    """
    if q <= 0:
        raise ValueError("q must be a positive integer")
    z = np.asarray(z, dtype=complex)
    g = z**q if q % 2 else -(z**q)
    out = z * ((g - 1.0) / (g + 1.0) + 1j * trace)
    return out if out.shape else complex(out)


def kappa_eval(model: VectorFieldModel, z):
    """kappa at z (scalar or array).  Refuses points within 1e-9 of a pole."""
    zz = np.asarray(z, dtype=complex)
    _check_pole_distance(model, zz)
    if model.q > 0:
        return kappa_closed(model.q, z, model.trace)
    assert model.measure is not None
    return kappa_measure(model.measure, z)


def kappa_deriv(model: VectorFieldModel, z):
    """kappa'(z) from the measure form, term by term.

    d/dz [-z (zeta - z)/(zeta + z)] = -(zeta - z)/(zeta + z) + 2 z zeta/(zeta + z)^2.
    At z = 0 this gives kappa'(0) = -1 + iT, so 0 is a sink.
    """
    measure = model.measure
    if measure is None:
        measure = roots_of_unity_measure(model.q, model.trace)
    z = np.asarray(z, dtype=complex)
    _check_pole_distance(model, z)
    acc = np.zeros_like(z)
    for zeta, mass in measure.atoms:
        den = zeta + z
        acc = acc + mass * (-(zeta - z) / den + 2.0 * z * zeta / den**2)
    out = acc + 1j * measure.trace
    return out if out.shape else complex(out)


def field_zeros(model: VectorFieldModel) -> tuple[complex, ...]:
    """Circle zeros of kappa for trace 0: the solutions of (-1)^(q+1) z^q = 1.

    For odd q these are the q-th roots of unity; for even q the roots of
    z^q = -1 (the roots-of-unity set is then the pole set, being closed
    under the antipodal map).
    """
    q = model.q if model.q > 0 else len(model.poles)
    if q % 2:
        return tuple(cmath.exp(2j * math.pi * k / q) for k in range(q))
    return tuple(cmath.exp(1j * math.pi * (2 * k + 1) / q) for k in range(q))


def test_point_grid(
    model: VectorFieldModel,
    radius: float = 0.9,
    n_angles: int = 64,
    n_radii: int = 4,
    margin: float = 0.1,
) -> np.ndarray:
    """Deterministic grid in |z| <= radius, away from the pole angles.

    Points whose angular distance to some pole angle is below margin are
    dropped, so kappa and the flow stay well defined on the grid.
    """
    angles = 2.0 * math.pi * np.arange(n_angles) / n_angles
    keep = np.ones(n_angles, dtype=bool)
    for pa in model.pole_angles:
        d = np.abs((angles - pa + math.pi) % (2.0 * math.pi) - math.pi)
        keep &= d >= margin
    angles = angles[keep]
    radii = np.linspace(0.2, radius, n_radii)
    pts = (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
    return pts


def _rk4_step(kap: Callable[[complex], complex], z: complex, h: float) -> complex:
    k1 = kap(z)
    k2 = kap(z + 0.5 * h * k1)
    k3 = kap(z + 0.5 * h * k2)
    k4 = kap(z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def flow(model: VectorFieldModel, z0: complex, eta: float) -> complex:
    """g^eta(z0): integrate dz/dt = kappa(z) for time t = log(1/eta).

    Adaptive RK4 with step doubling at relative tolerance 1e-9; the step is
    capped at a hundredth of the distance to the nearest pole, and the
    integration aborts if the orbit comes within 1e-6 of a pole (which
    happens for circle points flowing toward a pole for long times).
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    poles = model.poles

    if model.q > 0:
        q, trace = model.q, model.trace

        def kap(z: complex) -> complex:
            g = z**q if q % 2 else -(z**q)
            return z * ((g - 1.0) / (g + 1.0) + 1j * trace)

    else:
        measure = model.measure
        assert measure is not None

        def kap(z: complex) -> complex:
            acc = 0.0j
            for zeta, mass in measure.atoms:
                acc += mass * (zeta - z) / (zeta + z)
            return -z * acc + 1j * measure.trace * z

    t_total = math.log(1.0 / eta)
    z = complex(z0)
    t = 0.0
    h = min(0.1, t_total)
    while t < t_total:
        dist = min(abs(z - p) for p in poles)
        if dist < FLOW_POLE_ABORT:
            raise ArithmeticError(
                f"flow aborted {dist:.2e} from a pole at t = {t:.4f}"
            )
        h = min(h, FLOW_STEP_FRAC * dist, t_total - t)
        while True:
            if h < FLOW_MIN_STEP:
                raise ArithmeticError(f"step size underflow at t = {t:.4f}")
            one = _rk4_step(kap, z, h)
            half = _rk4_step(kap, z, 0.5 * h)
            two = _rk4_step(kap, half, 0.5 * h)
            err = abs(one - two)
            tol = FLOW_RTOL * max(1.0, abs(two))
            if err <= tol:
                break
            h *= 0.5
        # Richardson: the doubled step has local error ~ err/15.
        z = two + (two - one) / 15.0
        t += h
        if err < 0.1 * tol:
            h *= 1.6
    return z


def flow_batch(model: VectorFieldModel, points: Sequence[complex], eta: float) -> np.ndarray:
    """flow() over a grid of initial conditions."""
    return np.array([flow(model, z, eta) for z in points], dtype=complex)


def iterate_count(a, q: int, eta: float) -> int:
    """The integer T with |a^(qT)| nearest eta: round(log eta / (q log |a|))."""
    mod = abs(as_param(a).a)
    if not 0.0 < mod < 1.0:
        raise ValueError("|a| must lie in (0, 1)")
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    return int(round(math.log(eta) / (q * math.log(mod))))


@dataclass(frozen=True)
class LimitResidual:
    """Sup residuals of f_a^(q) - id against (1 - |a|^q) kappa."""

    levels: tuple[int, ...]
    sup_errors: tuple[float, ...]
    order_slope: float

    @property
    def sup_error(self) -> float:
        return self.sup_errors[-1]


def limit_residual_at(a, q: int, model: VectorFieldModel, points: np.ndarray) -> float:
    """sup over points of |f_a^(q)(z) - z - (1 - |a|^q) kappa(z)|."""
    aa = as_param(a).a
    z = np.asarray(points, dtype=complex)
    w = z.copy()
    for _ in range(q):
        w = apply_map(aa, w)
    scale = 1.0 - abs(aa) ** q
    resid = w - z - scale * kappa_eval(model, z)
    return float(np.max(np.abs(resid)))


def vf_limit_residual(
    p: int,
    q: int,
    levels: Sequence[int] = range(6, 11),
    radius: float = 0.9,
    margin: float = 0.1,
) -> LimitResidual:
    """Residuals along the horocyclic schedule a = e(p/q)(1 - 2^-k).

    The drift of the q-th return map toward (1 - |a|^q) kappa is second
    order, so the fitted slope of sup_error against 1 - |a|^q is 2.
    """
    model = limit_model(q)
    points = test_point_grid(model, radius=radius, margin=margin)
    root = cmath.exp(2j * math.pi * p / q)
    sups = []
    scales = []
    for k in levels:
        a = root * (1.0 - 0.5**k)
        sups.append(limit_residual_at(a, q, model, points))
        scales.append(1.0 - abs(a) ** q)
    slope = float(
        np.polyfit(np.log(np.asarray(scales)), np.log(np.asarray(sups)), 1)[0]
    )
    return LimitResidual(
        levels=tuple(levels), sup_errors=tuple(sups), order_slope=slope
    )


def iterate_vs_flow(
    a,
    p: int,
    q: int,
    eta: float,
    radius: float = 0.8,
    margin: float = 0.1,
) -> float:
    """sup |f_a^(qT)(z) - g^eta(z)| over a grid, T = round(log eta/(q log|a|)).

    Decreases along radial schedules a -> e(p/q); eta close enough to 1
    gives T = 0 and an exactly zero distance.
    """
    aa = as_param(a).a
    model = limit_model(q)
    n_iter = q * iterate_count(aa, q, eta)
    points = test_point_grid(model, radius=radius, margin=margin)
    w = points.copy()
    for _ in range(n_iter):
        w = apply_map(aa, w)
    g = flow_batch(model, points, eta)
    return float(np.max(np.abs(w - g)))


@dataclass(frozen=True)
class KoenigsVf:
    """Flow-side linearizer value with its half-eta consistency check."""

    value: complex
    rel_diff: float
    flagged: bool


def koenigs_vf(model: VectorFieldModel, z: complex, eta: float = KOENIGS_VF_ETA) -> KoenigsVf:
    """phi_kappa(z) = lim g^eta(z)/eta, evaluated at eta with an eta/2 check.

    The limit is normalized against exp(kappa'(0) t): for trace 0 this is
    division by eta itself.  flagged is set when the eta and eta/2 values
    differ by more than 1e-4 in relative terms.
    """
    if abs(z) >= 1.0:
        raise ValueError("koenigs_vf needs a point in the open disk")

    def estimate(e: float) -> complex:
        t = math.log(1.0 / e)
        lam = cmath.exp(complex(-1.0, model.trace) * t)
        return flow(model, z, e) / lam

    v1 = estimate(eta)
    v2 = estimate(0.5 * eta)
    rel = abs(v1 - v2) / max(abs(v2), 1e-300)
    return KoenigsVf(value=v2, rel_diff=rel, flagged=rel > KOENIGS_VF_REL_TOL)


def euler_compose(model: VectorFieldModel, z0: complex, steps: Sequence[float]) -> complex:
    """Compose Euler steps z -> z + delta kappa(z) over a partition.

    Aborts once the orbit leaves the analyticity ball |z| < 4.
    """
    z = complex(z0)
    for delta in steps:
        z = z + delta * complex(kappa_eval(model, z))
        if abs(z) > ANALYTICITY_RADIUS:
            raise ArithmeticError("Euler orbit left the analyticity ball")
    return z


@dataclass(frozen=True)
class PartitionCheck:
    """Mesh-refinement discrepancies of composed Euler families."""

    meshes: tuple[float, ...]
    discrepancies: tuple[float, ...]
    ratios: tuple[float, ...]


def partition_convergence_check(
    model: VectorFieldModel,
    z0: complex,
    t: float,
    n0: int = 8,
    n_levels: int = 5,
) -> PartitionCheck:
    """Compare each uniform partition of [0, t] with its halving refinement.

    The composed Euler family is a first-order method, so the discrepancy
    between a mesh and its refinement shrinks linearly in the mesh: the
    returned ratios sit near 1/2.
    """
    values = []
    meshes = []
    for j in range(n_levels + 1):
        n = n0 * 2**j
        values.append(euler_compose(model, z0, [t / n] * n))
        meshes.append(t / n)
    disc = [abs(values[j + 1] - values[j]) for j in range(n_levels)]
    ratios = [disc[j + 1] / disc[j] for j in range(n_levels - 1)]
    return PartitionCheck(
        meshes=tuple(meshes[:-1]),
        discrepancies=tuple(disc),
        ratios=tuple(ratios),
    )


def mobius_factor_residual(
    limit_point: complex,
    trace: float,
    delta: float,
    points: np.ndarray,
) -> float:
    """First-order expansion check for the Moebius factor M_a = (z+a)/(1+conj(a)z).

    Along the non-tangential approach a = A (1 - delta) e^{i T delta} the
    factor satisfies (M_a(z)/A - 1)/(1 - |a|) -> -(A - z)/(A + z) + iT; the
    returned sup residual is O(delta).
    """
    big_a = limit_point / abs(limit_point)
    a = big_a * (1.0 - delta) * cmath.exp(1j * trace * delta)
    z = np.asarray(points, dtype=complex)
    m = (z + a) / (1.0 + np.conjugate(a) * z)
    lhs = (m / big_a - 1.0) / (1.0 - abs(a))
    rhs = -(big_a - z) / (big_a + z) + 1j * trace
    return float(np.max(np.abs(lhs - rhs)))


def kappa_sample_grid(
    model: VectorFieldModel,
    n_radii: int = 12,
    n_angles: int = 48,
    margin: float = 0.05,
) -> tuple[np.ndarray, np.ndarray]:
    """(z, kappa(z)) samples on a polar grid for rendering."""
    angles = 2.0 * math.pi * np.arange(n_angles) / n_angles
    keep = np.ones(n_angles, dtype=bool)
    for pa in model.pole_angles:
        d = np.abs((angles - pa + math.pi) % (2.0 * math.pi) - math.pi)
        keep &= d >= margin
    angles = angles[keep]
    radii = np.linspace(1.0 / n_radii, 0.98, n_radii)
    z = (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
    return z, np.asarray(kappa_eval(model, z))
