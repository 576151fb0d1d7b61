"""Boundary dynamics of f_a: simple cycles, entropy, preimage trees.

On the unit circle f_a is an expanding degree-2 cover conjugate to
z -> z^2.  Simple p/q cycles are located by pulling back along the
itinerary of the model rotation word, which converges geometrically
because every inverse branch contracts.  Preimage trees pruned by a
log-derivative (or hyperbolic-radius) budget give the renewal counts
n(x, R) and N(z, R), whose normalized ratios and angle distributions
are the equidistribution diagnostics.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .blaschke_core import (
    BlaschkeParam,
    as_param,
    boundary_derivative_modulus,
    boundary_fixed_point,
    evaluate,
    inverse_images,
    inverse_images_batch,
)

CYCLE_TOL = 1e-12
CYCLE_PULLBACK_SWEEPS = 2000
CYCLE_COARSE_TOL = 1e-5
CYCLE_POLISH_STEPS = 120
ENTROPY_QUAD_POINTS = 4096
ENTROPY_QUAD_TOL = 1e-10
NODE_CAP = 10 ** 7
MEMBERSHIP_ITER_CAP = 10 ** 5
LAMINATED_ANGLE_SAMPLES = 1 << 20
PREIMAGE_DISJOINT_SAMPLES = 48


class TreeCapacityError(RuntimeError):
    """Preimage tree hit the node cap before exhausting the budget."""


@dataclass(frozen=True)
class RotationWord:
    """Symbolic model of a simple p/q cycle under angle doubling.

    digits are the itinerary bits b_k = floor((k+1)p/q) - floor(kp/q)
    and angle is the periodic binary expansion 0.(b_0 ... b_{q-1}) as a
    fraction with denominator 2^q - 1, in turns.
    """

    p: int
    q: int
    digits: tuple[int, ...]
    angle: Fraction


@dataclass(frozen=True)
class Cycle:
    """A simple cycle on the circle, points stored counter-clockwise."""

    a: BlaschkeParam
    p: int
    q: int
    xi: np.ndarray
    m: float
    L: float

    def complex_multiplier(self) -> complex:
        """(f^q)' at a cycle point, which should be real up to rounding."""
        prod = 1.0 + 0j
        for z in self.xi:
            prod *= evaluate(self.a, z).f1
        return prod


@dataclass(frozen=True)
class RenewalStats:
    base: complex
    R: float
    mode: str
    count: int
    h: float
    normalized_ratio: float
    ks_statistic: float


@dataclass(frozen=True)
class PreimageTree:
    mode: str
    base: complex
    budget: float
    count: int
    level_counts: tuple[int, ...]
    leaf_points: np.ndarray
    leaf_weights: np.ndarray
    nodes: Optional[list[tuple[np.ndarray, np.ndarray]]] = None


@dataclass(frozen=True)
class AnnularRectangle:
    """1 - |z| in (depth_min, depth_max), arg z in (angle_min, angle_max)."""

    depth_min: float
    depth_max: float
    angle_min: float
    angle_max: float

    def __post_init__(self):
        if not 0.0 < self.depth_min < self.depth_max < 1.0:
            raise ValueError("need 0 < depth_min < depth_max < 1")
        if not 0.0 <= self.angle_min < self.angle_max <= 2.0 * math.pi:
            raise ValueError("need 0 <= angle_min < angle_max <= 2 pi")

    def contains(self, z) -> np.ndarray:
        eps = 1.0 - np.abs(z)
        th = np.mod(np.angle(z), 2.0 * math.pi)
        return ((self.depth_min < eps) & (eps < self.depth_max)
                & (self.angle_min < th) & (th < self.angle_max))


class EntropyResult(NamedTuple):
    h_jensen: float
    h_quad: float


class LaminatedAreaResult(NamedTuple):
    circle_side: float
    integral_side: float
    ratio: float
    per_radius: np.ndarray


def rotation_word(p: int, q: int) -> RotationWord:
    """Itinerary digits and model angle of the simple p/q cycle.

    The doubling orbit of the angle is verified to advance by p
    counter-clockwise positions per step, which pins the rotation
    number combinatorially.
    """
    if q <= 0 or not 0 <= p < q or math.gcd(p, q) != 1:
        raise ValueError(f"{p}/{q} is not a reduced fraction in [0, 1)")
    digits = tuple((k + 1) * p // q - k * p // q for k in range(q))
    den = 2 ** q - 1
    num = sum(b << (q - 1 - k) for k, b in enumerate(digits))
    orbit = [(num * pow(2, k, den)) % den for k in range(q)]
    pos = {v: i for i, v in enumerate(sorted(orbit))}
    for v in orbit:
        if pos[(2 * v) % den] != (pos[v] + p) % q:
            raise ArithmeticError(f"digit word of {p}/{q} fails the rotation check")
    return RotationWord(p=p, q=q, digits=digits, angle=Fraction(num, den))


def _abs_deriv(aa: complex, w):
    """|f'| for scalar or array arguments anywhere in the closed disk."""
    return (np.abs(np.conjugate(aa) * w * w + 2.0 * w + aa)
            / np.abs(1.0 + np.conjugate(aa) * w) ** 2)


class _CodingPartition:
    """The two circle arcs cut by zeta_fix and its non-fixed preimage -1.

    Digit 0 is the counter-clockwise arc starting at zeta_fix, the one
    the conjugacy with z -> z^2 sends to [0, 1/2) in turns.
    """

    def __init__(self, par: BlaschkeParam):
        self.theta_fix = cmath.phase(boundary_fixed_point(par))
        self.len0 = (math.pi - self.theta_fix) % (2.0 * math.pi)

    def digit(self, z: complex) -> int:
        u = (cmath.phase(z) - self.theta_fix) % (2.0 * math.pi)
        return 0 if u < self.len0 else 1

    def ccw_coord(self, z: complex) -> float:
        return (cmath.phase(z) - self.theta_fix) % (2.0 * math.pi)


def _angle_defect(par: BlaschkeParam, theta: float, q: int) -> tuple[float, float]:
    """(arg f^q(e^{i theta}) - theta reduced to [-pi, pi], multiplier along the way)."""
    w = cmath.exp(1j * theta)
    m = 1.0
    for _ in range(q):
        m *= boundary_derivative_modulus(par, w)
        w = evaluate(par, w).f
        w /= abs(w)
    return math.remainder(cmath.phase(w) - theta, 2.0 * math.pi), m


def _polish_cycle_point(par: BlaschkeParam, y: complex, q: int, tol: float) -> complex:
    """Newton on the boundary angle defect, safeguarded by bisection.

    The defect theta -> arg f^q(e^{i theta}) - theta has derivative
    m(theta) - 1 > 0, so it increases strictly and sign brackets are
    trustworthy.  Near a degenerate multiplier the pullback crawls at
    rate 1/m per sweep; Newton restores fast convergence from its
    coarse output.  The bracket search never leaves a small arc around
    that output, which keeps the polish on the itinerary's own cycle.
    """
    theta = cmath.phase(y)
    resid, _ = _angle_defect(par, theta, q)
    if resid == 0.0:
        return cmath.exp(1j * theta)

    # the defect has a single zero per branch of the reduction, so for
    # q = 1 the whole circle may be scanned; larger q must stay local
    half_cap = math.pi if q == 1 else min(0.5, math.pi / (2.0 * q))
    sgn = 1.0 if resid < 0.0 else -1.0
    near, far = theta, None
    step = 1e-3
    while True:
        cand = theta + sgn * min(step, half_cap)
        rc, _ = _angle_defect(par, cand, q)
        if rc == 0.0:
            return cmath.exp(1j * cand)
        if (rc > 0.0) != (resid > 0.0):
            far = cand
            break
        near = cand
        if step >= half_cap:
            break
        step *= 2.0
    if far is None:
        raise RuntimeError(
            f"angle defect of the {q}-cycle keeps its sign within {half_cap:.3f} "
            f"of the pullback estimate at a = {par.a}")
    lo, hi = (near, far) if near < far else (far, near)

    x = theta if lo <= theta <= hi else 0.5 * (lo + hi)
    for _ in range(CYCLE_POLISH_STEPS):
        rx, mx = _angle_defect(par, x, q)
        if rx == 0.0:
            break
        if rx < 0.0:
            lo = x
        else:
            hi = x
        newton = x - rx / (mx - 1.0)
        if abs(rx) < tol * (mx - 1.0):
            # distance to the root is ~ |rx| / (m - 1), one last step lands it
            x = min(max(newton, lo), hi)
            break
        cand = newton if lo < newton < hi else 0.5 * (lo + hi)
        if abs(cand - x) < 2e-16 * max(1.0, abs(x)) or hi - lo < 4e-16:
            x = cand
            break
        x = cand
    return cmath.exp(1j * x)


def find_simple_cycle(a, p: int, q: int, tol: float = CYCLE_TOL,
                      initial: Optional[complex] = None) -> Cycle:
    """Locate the unique simple p/q cycle on the unit circle.

    Itinerary pullback sweeps apply the q inverse branches prescribed
    by the rotation word, a circle contraction with factor 1/m that
    singles out the correct cycle but slows to a crawl as m -> 1.  The
    sweeps therefore only run until the increments drop below a coarse
    threshold, and a bracketed Newton iteration on the angle defect of
    f^q finishes the job at machine precision.  Points are returned
    counter-clockwise starting from the first one past zeta_fix, and
    the advance-by-p check is a hard error because a violation would
    contradict simplicity.
    """
    par = as_param(a)
    word = rotation_word(p, q)
    part = _CodingPartition(par)
    if initial is None:
        u0 = 0.5 * part.len0 if word.digits[0] == 0 else \
            part.len0 + 0.5 * (2.0 * math.pi - part.len0)
        y = cmath.exp(1j * (part.theta_fix + u0))
    else:
        y = complex(initial) / abs(initial)

    converged = False
    inc_prev: Optional[float] = None
    for _ in range(CYCLE_PULLBACK_SWEEPS):
        y_prev = y
        for d in reversed(word.digits):
            w1, w2 = inverse_images(par, y)
            c1, c2 = w1 / abs(w1), w2 / abs(w2)
            if part.digit(c1) == d:
                y = c1
            elif part.digit(c2) == d:
                y = c2
            else:
                raise RuntimeError(
                    f"no preimage of {y} lands in arc {d}; partition degenerate")
        inc = cmath.phase(y * y_prev.conjugate())
        if abs(inc) < tol:
            converged = True
            break
        if abs(inc) < CYCLE_COARSE_TOL:
            break
        if inc_prev is not None and inc_prev != 0.0:
            # near a degenerate multiplier the increments decay almost
            # exactly geometrically; extrapolate the tail and jump.
            # The pullback contracts the whole circle, so an overshoot
            # only costs the next few sweeps, never the right cycle.
            lam = inc / inc_prev
            if 0.0 < lam < 1.0:
                tail = min(max(inc * lam / (1.0 - lam), -math.pi), math.pi)
                y = cmath.exp(1j * (cmath.phase(y) + tail))
                inc_prev = None
                continue
        inc_prev = inc
    if not converged:
        y = _polish_cycle_point(par, y, q, tol)

    pts = [y]
    for _ in range(q - 1):
        nxt = evaluate(par, pts[-1]).f
        pts.append(nxt / abs(nxt))
    order = sorted(range(q), key=lambda i: part.ccw_coord(pts[i]))
    xi = np.array([pts[i] for i in order])

    for i in range(q):
        img = evaluate(par, xi[i]).f
        if abs(img - xi[(i + p) % q]) > 1e-8:
            raise ArithmeticError(
                f"cycle {p}/{q} at a = {par.a} violates the ccw advance by p")
    if q > 1:
        for k, pt in enumerate(pts):
            u = part.ccw_coord(pt)
            if min(u, abs(u - part.len0), 2.0 * math.pi - u) < 1e-12:
                continue
            if part.digit(pt) != word.digits[k]:
                raise ArithmeticError(
                    f"polished {p}/{q} cycle left the itinerary at a = {par.a}")

    m = float(np.prod([boundary_derivative_modulus(par, z) for z in xi]))
    return Cycle(a=par, p=p, q=q, xi=xi, m=m, L=math.log(m))


def index_identity_residual(a) -> float:
    """Defect of 1/(m_{0/1} - 1) = (1 - |a|^2)/|1 - a|^2.

    With a single fixed point on the circle the holomorphic index
    identity is exact, so this should vanish to rounding.
    """
    par = as_param(a)
    m = find_simple_cycle(par, 0, 1).m
    rhs = (1.0 - abs(par.a) ** 2) / abs(1.0 - par.a) ** 2
    return abs(1.0 / (m - 1.0) - rhs)


def cycle_index_bound(a, p: int, q: int) -> tuple[float, float]:
    """(1/(m_{p/q} - 1), the index upper bound (1/q)(1-|a^q|^2)/|1-a^q|^2)."""
    par = as_param(a)
    m = find_simple_cycle(par, p, q).m
    aq = par.a ** q
    return 1.0 / (m - 1.0), (1.0 / q) * (1.0 - abs(aq) ** 2) / abs(1.0 - aq) ** 2


def entropy(a, n_quad: int = ENTROPY_QUAD_POINTS) -> EntropyResult:
    """Lyapunov exponent of Lebesgue measure, twice.

    h_jensen = log(|a| / |c|) comes from Jensen's formula applied to
    f', h_quad from the periodic trapezoid rule on log |f'| over the
    circle.  The trapezoid value at half resolution must agree to
    ENTROPY_QUAD_TOL, otherwise the quadrature has not settled.
    """
    par = as_param(a)
    h_jensen = math.log(abs(par.a) / abs(par.c))

    def quad(n: int) -> float:
        th = 2.0 * math.pi * np.arange(n) / n
        zeta = np.exp(1j * th)
        vals = np.log1p((1.0 - abs(par.a) ** 2) / np.abs(zeta + par.a) ** 2)
        return float(vals.mean())

    h_quad = quad(n_quad)
    if abs(h_quad - quad(n_quad // 2)) > ENTROPY_QUAD_TOL * max(1.0, abs(h_quad)):
        raise ArithmeticError(f"entropy quadrature unstable at n_quad = {n_quad}")
    return EntropyResult(h_jensen=h_jensen, h_quad=h_quad)


def green_residual(a, z) -> float:
    """Defect of G(w1) + G(w2) = G(z) for G = log(1/|.|), zero by Vieta."""
    z = complex(z)
    if z == 0:
        raise ValueError("Green's function pole at z = 0")
    w1, w2 = inverse_images(a, z)
    return abs(math.log(1.0 / abs(w1)) + math.log(1.0 / abs(w2))
               - math.log(1.0 / abs(z)))


def lebesgue_invariance_residual(a, x) -> float:
    """Defect of sum over f(w) = x of 1/|f'(w)| = 1 on the circle."""
    par = as_param(a)
    x = complex(x)
    x /= abs(x)
    w1, w2 = inverse_images(par, x)
    total = sum(1.0 / boundary_derivative_modulus(par, w / abs(w)) for w in (w1, w2))
    return abs(total - 1.0)


def preimage_tree(a, x, R: float, mode: str = "boundary",
                  node_cap: int = NODE_CAP, keep_nodes: bool = False) -> PreimageTree:
    """Breadth-first repeated preimages within a budget.

    Every (point, depth) pair with accumulated log |(f^n)'| at most R
    (boundary mode) or hyperbolic distance to 0 at most R (interior
    mode) is counted, the root included.  Pruning whole subtrees is
    sound because both quantities are nondecreasing along pullbacks:
    |f'| > 1 on the circle, and interior preimages move outward since
    their Green's functions split G(z).  Leaves are counted nodes none
    of whose children fit the budget; their angles feed the
    equidistribution statistics.
    """
    par = as_param(a)
    aa = par.a
    if R < 0:
        raise ValueError("budget R must be nonnegative")
    if mode not in ("boundary", "interior"):
        raise ValueError(f"unknown mode {mode!r}")
    x = complex(x)
    if mode == "boundary":
        if abs(x) == 0:
            raise ValueError("boundary base point cannot be 0")
        x /= abs(x)
    elif not 0.0 < abs(x) < 1.0:
        raise ValueError("interior mode needs 0 < |z| < 1")

    pts = np.array([x], dtype=complex)
    wts = np.zeros(1)
    count = 0
    level_counts: list[int] = []
    leaf_pts: list[np.ndarray] = []
    leaf_wts: list[np.ndarray] = []
    nodes: Optional[list[tuple[np.ndarray, np.ndarray]]] = [] if keep_nodes else None

    while len(pts):
        count += len(pts)
        level_counts.append(len(pts))
        if count > node_cap:
            raise TreeCapacityError(
                f"preimage tree exceeded {node_cap} nodes at depth {len(level_counts) - 1}")
        if keep_nodes:
            nodes.append((pts, wts))
        w1, w2 = inverse_images_batch(par, pts)
        children = np.concatenate([w1, w2])
        if mode == "boundary":
            children /= np.abs(children)
        child_w = np.concatenate([wts, wts]) + np.log(_abs_deriv(aa, children))
        if mode == "boundary":
            keep = child_w <= R
        else:
            r = np.abs(children)
            keep = np.log((1.0 + r) / (1.0 - r)) <= R
        n = len(pts)
        has_kept_child = keep[:n] | keep[n:]
        if not np.all(has_kept_child):
            leaf_pts.append(pts[~has_kept_child])
            leaf_wts.append(wts[~has_kept_child])
        pts = children[keep]
        wts = child_w[keep]

    return PreimageTree(
        mode=mode, base=x, budget=R, count=count,
        level_counts=tuple(level_counts),
        leaf_points=np.concatenate(leaf_pts) if leaf_pts else np.empty(0, dtype=complex),
        leaf_weights=np.concatenate(leaf_wts) if leaf_wts else np.empty(0),
        nodes=nodes,
    )


def ks_uniform_angle(angles: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance of angle marks from the uniform law."""
    u = np.sort(np.mod(np.asarray(angles, dtype=float), 2.0 * math.pi)) / (2.0 * math.pi)
    n = len(u)
    if n == 0:
        return 1.0
    k = np.arange(1, n + 1, dtype=float)
    return float(max(np.max(k / n - u), np.max(u - (k - 1.0) / n)))


def renewal_count(a, base, R: float, mode: str = "boundary",
                  node_cap: int = NODE_CAP) -> RenewalStats:
    """Renewal diagnostics at one budget.

    normalized_ratio compares the tree count with e^R / h (boundary)
    or with (G(z) / 2h) e^R (interior), both of which tend to 1 as R
    grows; ks_statistic measures how uniformly the leaf angles spread
    over the circle.
    """
    par = as_param(a)
    h = entropy(par).h_jensen
    tree = preimage_tree(par, base, R, mode=mode, node_cap=node_cap)
    if mode == "boundary":
        ratio = tree.count * h / math.exp(R)
    else:
        green = math.log(1.0 / abs(tree.base))
        ratio = tree.count * h / (0.5 * green * math.exp(R))
    ks = ks_uniform_angle(np.angle(tree.leaf_points))
    return RenewalStats(base=tree.base, R=R, mode=mode, count=tree.count,
                        h=h, normalized_ratio=ratio, ks_statistic=ks)


def _check_clearance(par: BlaschkeParam, E: AnnularRectangle) -> None:
    if E.depth_max >= 0.5 * par.delta_c:
        raise ValueError(
            f"rectangle depth {E.depth_max} reaches past half the critical gap "
            f"{par.delta_c}; the laminated estimate needs E inside the linearity zone")
    depths = np.geomspace(E.depth_min * 1.01, E.depth_max * 0.99, 4)
    angles = np.linspace(E.angle_min, E.angle_max, PREIMAGE_DISJOINT_SAMPLES // 4 + 2)[1:-1]
    d, t = np.meshgrid(depths, angles)
    frontier = ((1.0 - d) * np.exp(1j * t)).ravel()
    for _ in range(3):
        w1, w2 = inverse_images_batch(par, frontier)
        frontier = np.concatenate([w1, w2])
        if bool(np.any(E.contains(frontier))):
            raise ValueError("rectangle meets one of its first three preimages")


def laminated_area_estimate(a, E: AnnularRectangle, r_schedule: Sequence[float],
                            n_angles: int = LAMINATED_ANGLE_SAMPLES,
                            iter_cap: int = MEMBERSHIP_ITER_CAP) -> LaminatedAreaResult:
    """Two measurements of the lamination through a thin rectangle.

    circle_side is the angular fraction of the circle of radius r whose
    forward orbit passes through E, evaluated on a uniform angle grid
    at each radius of the schedule and reported at the finest one.
    integral_side is (1 / 2 pi h) int_E dA / (1 - |z|), available in
    closed form for an annular rectangle.  Orbits only sink deeper
    (1 - |f(z)| >= 1 - |z|), so membership iteration stops as soon as
    the orbit passes below the rectangle.
    """
    par = as_param(a)
    _check_clearance(par, E)
    if not r_schedule:
        raise ValueError("r_schedule must not be empty")
    for r in r_schedule:
        if not 0.0 < r < 1.0 or 1.0 - r >= E.depth_min:
            raise ValueError(f"radius {r} does not lie between E and the circle")

    h = entropy(par).h_jensen
    width = E.angle_max - E.angle_min
    integral_side = width * (math.log(E.depth_max / E.depth_min)
                             - (E.depth_max - E.depth_min)) / (2.0 * math.pi * h)

    fractions = np.empty(len(r_schedule))
    angles = 2.0 * math.pi * (np.arange(n_angles) + 0.5) / n_angles
    ring = np.ascontiguousarray(np.exp(1j * angles))
    for i, r in enumerate(r_schedule):
        result, _ = _kernels.orbit_enter_batch(
            par.a, r * ring, E.depth_min, E.depth_max,
            E.angle_min, E.angle_max, iter_cap)
        if np.any(result < 0):
            raise RuntimeError(f"membership iteration cap {iter_cap} hit at r = {r}")
        fractions[i] = result.mean()

    circle_side = float(fractions[-1])
    ratio = circle_side / integral_side if integral_side else math.nan
    if integral_side == 0.0:
        ratio = 0.0 if circle_side == 0.0 else math.inf
    return LaminatedAreaResult(circle_side=circle_side, integral_side=integral_side,
                               ratio=ratio, per_radius=fractions)
