"""Beltrami coefficients and the Weil-Petersson norm estimator.

The objects here are measurable conformal-structure perturbations mu
on the unit disk with |mu| bounded, reflected to the exterior by the
circle involution.  The third derivative of the induced vector field
at an interior point z is

    v'''(z) = -(6/pi) integral over |zeta| > 1 of mu+(zeta)/(zeta-z)^4,

which after the substitution zeta = 1/conj(u) becomes an integral over
the disk of mu(u) (conj(u)/u)^4 (1 - z conj(u))^(-4).  Everything else
is built on top of that kernel: circle averages of |v'''/rho^2|^2,
their plateau value as the radius approaches 1 (the squared WP norm),
and decay fits of that value along radial degenerations a -> e(p/q).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .blaschke_core import BlaschkeParam, as_param, koenigs_batch
from .gardens import GardenFrame, _frac_from_logs

V3_PREFACTOR = -6.0 / math.pi
POINT_BOUND = 1.5            # |v'''| <= POINT_BOUND * ||mu||_inf * rho^2
MODE_TAIL_LOG = 45.0         # kernel mode cutoff: K ~ MODE_TAIL_LOG / (1 - r s)
PLATEAU_REL_STEP = 0.10
PLATEAU_MIN_RUN = 3
DEFAULT_DELTAS = (0.02, 0.01, 0.005, 0.0025)
FIELD_KINDS = ("optimal", "half_optimal", "constant", "custom")


@dataclass(frozen=True)
class QuadConfig:
    """Knobs of the polar disk quadrature for the v''' kernel.

    Radial rings are geometrically clustered toward the unit circle
    and truncated at 1 - s = edge_frac * (1 - |z|); each ring is
    sampled uniformly in angle with enough nodes to resolve the kernel
    peak of width 1 - |z| s, then doubled once more so the difference
    of the two resolutions serves as the error estimate.
    """

    n_base: int = 256
    nodes_per_octave: int = 12
    edge_frac: float = 1e-3
    peak_frac: float = 0.25
    refine_tol: float = 1e-4
    n_cap: int = 1 << 16
    n_cap_stream: int = 1 << 20
    exterior_t_max: float = 400.0

    @property
    def max_level(self) -> int:
        return max(1, (self.n_cap // self.n_base).bit_length() - 1)


DEFAULT_QUAD = QuadConfig()
# Circle sweeps integrate |v'''|^2 to a few-percent residual, not to
# oracle precision: a wider dropped edge band (recovered by the density
# extrapolation) and a coarser radial grid shed the most expensive rings,
# the near-edge ones whose points cost the most linearizer iterations.
CIRCLE_QUAD = QuadConfig(nodes_per_octave=8, edge_frac=0.03)


def poincare_density(z):
    """Density 2 / (1 - |z|^2) of the hyperbolic metric on the disk."""
    return 2.0 / (1.0 - np.abs(z) ** 2)


def _log_simpson(lo: float, hi: float, per_octave: int
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for the integral of F over [lo, hi].

    The grid is uniform in log x, where composite Simpson applies
    directly; the returned weights absorb the Jacobian x dt, so the
    integral is just sum(w * F(x)).  Fourth order for smooth F.
    """
    n = max(2, math.ceil(per_octave * math.log2(hi / lo)))
    if n % 2:
        n += 1
    t = np.linspace(math.log(lo), math.log(hi), n + 1)
    x = np.exp(t)
    h = (t[-1] - t[0]) / n
    wt = np.full(n + 1, 2.0)
    wt[1::2] = 4.0
    wt[0] = wt[-1] = 1.0
    return x, (h / 3.0) * wt * x


class BeltramiField:
    """A bounded measurable coefficient mu on the disk.

    Four kinds are supported.  "optimal" is the pullback of the
    rotationally invariant coefficient lambda (w/conj(w)) dconj(w)/dw
    through the linearizer of f_a, which makes it f-invariant with
    |mu| = |lambda| off the critical grand orbit.  "half_optimal" cuts
    the optimal coefficient to a half-flower garden.  "constant" is a
    fixed value, and "custom" wraps a vectorized callable for test
    fields.  Evaluation reports an ok mask alongside the values; not-ok
    points (linearizer failures, indeterminate garden membership)
    evaluate to 0 and are tallied by the quadrature as indeterminate.
    """

    def __init__(self, kind: str, lam: complex = 1.0 + 0j,
                 frame: Optional[GardenFrame] = None,
                 param: Optional[BlaschkeParam] = None,
                 func: Optional[Callable[[np.ndarray], object]] = None,
                 norm_inf: Optional[float] = None):
        if kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {kind!r}")
        if kind in ("optimal", "half_optimal"):
            if kind == "half_optimal":
                if frame is None:
                    raise ValueError("half_optimal needs a GardenFrame")
                param = frame.a
            if param is None:
                raise ValueError("optimal needs the map parameter a")
            if abs(lam) > 1.0 + 1e-12:
                raise ValueError("|lambda| must not exceed 1")
        if kind == "custom" and (func is None or norm_inf is None):
            raise ValueError("custom needs func and norm_inf")
        self.kind = kind
        self.lam = complex(lam)
        self.frame = frame
        self.param = param
        self.func = func
        self.norm_inf = float(abs(lam) if norm_inf is None else norm_inf)

    def __repr__(self):
        return f"BeltramiField(kind={self.kind!r}, norm_inf={self.norm_inf:g})"

    def eval_batch(self, u) -> tuple[np.ndarray, np.ndarray]:
        """(values, ok) at an array of interior points."""
        u = np.asarray(u, dtype=complex)
        shape = u.shape
        flat = u.ravel()
        if self.kind == "constant":
            return np.full(shape, self.lam), np.ones(shape, dtype=bool)
        if self.kind == "custom":
            out = self.func(flat)
            if isinstance(out, tuple):
                vals, ok = out
                vals = np.asarray(vals, dtype=complex).copy()
                ok = np.asarray(ok, dtype=bool)
            else:
                vals = np.asarray(out, dtype=complex).copy()
                ok = np.ones(flat.shape, dtype=bool)
            vals[~ok] = 0.0
            return vals.reshape(shape), ok.reshape(shape)
        out = koenigs_batch(self.param, flat)
        ok = out.status == 0
        # phases only: mu = lam e^{2i(Im log phi - arg phi')}, so the
        # magnitude is exactly |lam| wherever the linearizer converged
        vals = self.lam * np.exp(2j * (out.im_log_phi - out.arg_dphi))
        if self.kind == "half_optimal":
            frac = _frac_from_logs(self.frame, out.log_abs_phi, out.im_log_phi)
            lo = (1.0 - self.frame.alpha) / 2.0
            hi = (1.0 + self.frame.alpha) / 2.0
            vals = np.where((frac > lo) & (frac < hi), vals, 0.0)
        vals = np.where(ok, vals, 0.0)
        return vals.reshape(shape), ok.reshape(shape)


def optimal_field(a, lam: complex = 1.0 + 0j) -> BeltramiField:
    """The f-invariant coefficient of modulus |lam| pulled back by phi."""
    return BeltramiField("optimal", lam=lam, param=as_param(a))


def half_optimal_field(frame: GardenFrame, lam: complex = 1.0 + 0j) -> BeltramiField:
    """The optimal coefficient restricted to the garden of the frame."""
    return BeltramiField("half_optimal", lam=lam, frame=frame)


def constant_field(kappa0: complex) -> BeltramiField:
    """mu identically kappa0."""
    return BeltramiField("constant", lam=kappa0)


def custom_field(func: Callable[[np.ndarray], object], norm_inf: float) -> BeltramiField:
    """Wrap a vectorized callable u -> mu(u) (or (values, ok))."""
    return BeltramiField("custom", func=func, norm_inf=norm_inf)


def linear_combination(c1: complex, f1: BeltramiField,
                       c2: complex, f2: BeltramiField) -> BeltramiField:
    """c1 f1 + c2 f2 as a custom field; ok only where both inputs are."""
    def combo(u):
        v1, ok1 = f1.eval_batch(u)
        v2, ok2 = f2.eval_batch(u)
        return c1 * v1 + c2 * v2, ok1 & ok2
    return custom_field(combo, abs(c1) * f1.norm_inf + abs(c2) * f2.norm_inf)


def pullback_field(field: BeltramiField, gamma) -> BeltramiField:
    """gamma^* mu for a disk automorphism gamma.

    The conjugation is the one induced by pulling back the reflected
    exterior coefficient, which is what makes |v'''/rho^2| invariant:
    on top of the familiar mu(gamma u) conj(gamma')/gamma' the circle
    reflection contributes the unimodular twist
    (gamma'/conj gamma') (conj(gamma u) u / (conj(u) gamma u))^4,
    because the kernel weight (conj(u)/u)^4 is not itself equivariant.
    Derivation: gamma commutes with the reflection j(z) = 1/conj(z),
    and conj(gamma'(j(z))) = z^2 gamma'(z)/gamma(z)^2.
    """
    def pulled(u):
        u = np.asarray(u, dtype=complex)
        gu = gamma(u)
        vals, ok = field.eval_batch(gu)
        d = gamma.deriv(u)
        with np.errstate(invalid="ignore", divide="ignore"):
            twist = (d / np.conjugate(d)) \
                * (np.conjugate(gu) * u / (np.conjugate(u) * gu)) ** 4
            out = vals * twist
        # the twist is unimodular away from two points of measure zero
        return np.where((u == 0) | (gu == 0), 0.0, out), ok
    return custom_field(pulled, field.norm_inf)


def beltrami_eval(field: BeltramiField, u) -> complex:
    """mu at one interior point; indeterminate points are a hard error."""
    u = complex(getattr(u, "z", u))
    if u == 0:
        raise ValueError("coefficient undefined at the origin")
    if abs(u) >= 1:
        raise ValueError("evaluation point must lie inside the disk")
    vals, ok = field.eval_batch(np.array([u]))
    if not bool(ok[0]):
        raise ArithmeticError(f"coefficient indeterminate at {u}")
    return complex(vals[0])


def reflect_coefficient(field: BeltramiField, zeta):
    """The reflected coefficient mu+ at exterior points.

    mu+(zeta) = mu(1/conj(zeta)) (conj(zeta)/zeta)^2, so its modulus
    equals that of mu at the mirror point.
    """
    zeta = np.asarray(zeta, dtype=complex)
    if np.any(np.abs(zeta) <= 1.0):
        raise ValueError("reflection is defined outside the closed disk")
    mirror = 1.0 / np.conjugate(zeta)
    vals, _ = field.eval_batch(mirror)
    out = vals * (np.conjugate(zeta) / zeta) ** 2
    return complex(out) if out.shape == () else out


@lru_cache(maxsize=32)
def _unit_angles_small(n: int) -> np.ndarray:
    phi = 2.0 * math.pi * np.arange(n) / n
    phi.setflags(write=False)
    return phi


def _unit_angles(n: int) -> np.ndarray:
    # caching multi-megabyte angle arrays would pin too much memory
    if n <= (1 << 16):
        return _unit_angles_small(n)
    return 2.0 * math.pi * np.arange(n) / n


def _kernel_modes(rs: float, k_max: int) -> np.ndarray:
    """Taylor modes binom(k+3, 3) (rs)^k of (1 - rs e^{i psi})^(-4)."""
    if rs <= 0.0:
        return np.ones(1)
    k = np.arange(k_max, dtype=float)
    logc = (np.log1p(k) + np.log(k + 2.0) + np.log(k + 3.0)
            - math.log(6.0) + k * math.log(rs))
    return np.exp(logc)


def _mode_count(rs: float) -> int:
    width = max(1.0 - rs, 1e-9)
    return int((MODE_TAIL_LOG + 4.0 * math.log(1.0 / width)) / width) + 8


def _fold_modes(spec: np.ndarray, rs: float, factor: float,
                out: np.ndarray) -> None:
    """Accumulate one ring's kernel sum into circle Fourier modes.

    out[k] collects the e^{i k theta} coefficient of the ring's
    contribution to v''' on the circle; the fold over k mod len(out)
    is exact because e^{i k theta_m} only depends on k mod n_theta at
    the uniform circle nodes.
    """
    n = spec.size
    n_theta = out.size
    modes = _kernel_modes(rs, _mode_count(rs))
    k = np.arange(modes.size)
    terms = factor * modes * spec[k % n]
    pad = (-terms.size) % n_theta
    if pad:
        terms = np.concatenate([terms, np.zeros(pad, dtype=complex)])
    out += terms.reshape(-1, n_theta).sum(axis=0)


class _PolarGrid:
    """Field samples on clustered rings, with per-ring spectral sums.

    Ring angular data is cached per refinement level; level l + 1
    reuses the level-l samples as its even-index nodes, so refinement
    only ever pays for new points.  The cached spectrum of each ring
    turns every kernel sum into a short mode recombination, which is
    numerically identical to the literal trapezoid sum on that ring.
    """

    def __init__(self, field: BeltramiField, x_min: float, quad: QuadConfig):
        if not 0.0 < x_min < 1.0:
            raise ValueError("ring truncation depth must sit in (0, 1)")
        self.field = field
        self.quad = quad
        self.x_min = x_min
        self.max_target = 1.0 - x_min / quad.edge_frac
        x, w = _log_simpson(x_min, 1.0, quad.nodes_per_octave)
        # ascending s: shallow rings first, the deepest ring last
        self.s = (1.0 - x)[::-1].copy()
        self.w = w[::-1].copy()
        self._g: dict[tuple[int, int], np.ndarray] = {}
        self._spec: dict[tuple[int, int], np.ndarray] = {}
        self._bad: dict[tuple[int, int], int] = {}
        self._evals = 0
        self._bad_total = 0

    def start_level(self, s: float, rz: float) -> int:
        width = max(1.0 - rz * s, 2.0 * math.pi / self.quad.n_cap)
        n_req = 2.0 * math.pi / (self.quad.peak_frac * width)
        level = max(0, math.ceil(math.log2(max(n_req, 1.0) / self.quad.n_base)))
        return min(level, self.quad.max_level - 1)

    def _samples(self, i: int, level: int) -> np.ndarray:
        key = (i, level)
        g = self._g.get(key)
        if g is not None:
            return g
        n = self.quad.n_base << level
        s = self.s[i]
        prev = self._g.get((i, level - 1))
        if prev is not None:
            phi = 2.0 * math.pi * np.arange(1, n, 2) / n
            vals, ok = self.field.eval_batch(s * np.exp(1j * phi))
            g = np.empty(n, dtype=complex)
            g[::2] = prev
            g[1::2] = vals * np.exp(-8j * phi)
            fresh_bad = int(n // 2 - np.count_nonzero(ok))
            bad = self._bad[(i, level - 1)] + fresh_bad
            self._evals += n // 2
            self._bad_total += fresh_bad
        else:
            phi = _unit_angles(n)
            vals, ok = self.field.eval_batch(s * np.exp(1j * phi))
            g = vals * np.exp(-8j * phi)
            bad = int(n - np.count_nonzero(ok))
            self._evals += n
            self._bad_total += bad
        self._g[key] = g
        self._bad[key] = bad
        # two levels back is never consulted again once this one exists
        if n > (1 << 12):
            self._g.pop((i, level - 2), None)
            self._spec.pop((i, level - 2), None)
        return g

    def spectrum(self, i: int, level: int) -> np.ndarray:
        key = (i, level)
        spec = self._spec.get(key)
        if spec is None:
            spec = np.fft.fft(self._samples(i, level))
            self._spec[key] = spec
        return spec

    def ring_sum(self, i: int, level: int, z: complex) -> complex:
        """Trapezoid kernel sum of ring i at one target point."""
        s = self.s[i]
        spec = self.spectrum(i, level)
        n = spec.size
        rs = abs(z) * s
        modes = _kernel_modes(rs, _mode_count(rs))
        k = np.arange(modes.size)
        terms = modes * spec[k % n]
        if rs > 0.0:
            terms = terms * np.exp(1j * cmath.phase(z) * k)
        return self.w[i] * s * (2.0 * math.pi / n) * complex(terms.sum())

    def indeterminate_fraction(self) -> float:
        return self._bad_total / self._evals if self._evals else 0.0


def prepare_quadrature(field: BeltramiField, max_abs_z: float,
                       quad: QuadConfig = DEFAULT_QUAD) -> _PolarGrid:
    """Build a reusable sample grid deep enough for targets up to |z|."""
    if not 0.0 <= max_abs_z < 1.0:
        raise ValueError("target radius must sit in [0, 1)")
    return _PolarGrid(field, quad.edge_frac * (1.0 - max_abs_z), quad)


class V3Report(NamedTuple):
    value: complex
    residual: float
    stalled: bool
    n_rings: int


def _v3_point(grid: _PolarGrid, z: complex) -> V3Report:
    quad = grid.quad
    rz = abs(z)
    scale = max(POINT_BOUND * grid.field.norm_inf, 1e-12) * poincare_density(z) ** 2
    weight_total = float(np.dot(grid.w, grid.s))
    total = 0j
    residual = 0.0
    stalled = False
    ring_vals: list[tuple[int, complex]] = []
    for i in range(grid.s.size):
        if grid.s[i] == 0.0:
            continue
        share = max(grid.w[i] * grid.s[i] / weight_total, 0.02)
        tol_i = quad.refine_tol * scale * share / abs(V3_PREFACTOR)
        level = grid.start_level(grid.s[i], rz)
        cur = grid.ring_sum(i, level, z)
        while True:
            if level + 1 > quad.max_level:
                stalled = True
                residual += quad.refine_tol * scale * share
                break
            nxt = grid.ring_sum(i, level + 1, z)
            diff = abs(nxt - cur)
            cur = nxt
            if diff <= tol_i:
                residual += diff * abs(V3_PREFACTOR)
                break
            level += 1
        total += cur
        ring_vals.append((i, cur))
    # linear extrapolation of the ring density covers the dropped band
    # (s_max, 1); the curvature term it cannot see goes to the residual
    (ip, dp), (il, dl) = ring_vals[-2], ring_vals[-1]
    dens_prev = dp / grid.w[ip]
    dens_last = dl / grid.w[il]
    gap = grid.s[il] - grid.s[ip]
    second = 0.5 * grid.x_min ** 2 * (dens_last - dens_prev) / gap
    total += grid.x_min * dens_last + second
    residual += 2.0 * abs(V3_PREFACTOR) * abs(second)
    return V3Report(value=V3_PREFACTOR * total, residual=residual,
                    stalled=stalled, n_rings=int(grid.s.size))


def v3_report(field: BeltramiField, z, quad: QuadConfig = DEFAULT_QUAD,
              grid: Optional[_PolarGrid] = None) -> V3Report:
    """v''' at z with the refinement residual and stall flag attached."""
    z = complex(getattr(z, "z", z))
    if abs(z) >= 1.0:
        raise ValueError("v''' is evaluated at interior points only")
    if grid is None:
        grid = prepare_quadrature(field, abs(z), quad)
    elif abs(z) > grid.max_target * (1.0 + 1e-12):
        raise ValueError("grid too shallow for this target; rebuild deeper")
    return _v3_point(grid, z)


def v3_exterior(field: BeltramiField, z, quad: QuadConfig = DEFAULT_QUAD,
                grid: Optional[_PolarGrid] = None) -> complex:
    """v'''(z) from the reflected coefficient, as an interior integral."""
    return v3_report(field, z, quad, grid).value


def v3_exterior_direct(field: BeltramiField, z,
                       quad: QuadConfig = DEFAULT_QUAD) -> tuple[complex, float]:
    """Independent route: literal truncated quadrature outside the circle.

    Integrates mu+(zeta)/(zeta - z)^4 over 1 < |zeta| <= t_max on its
    own polar grid with explicit kernel values, no spectral shortcuts,
    so agreement with v3_exterior cross-checks the change of variables
    and the reflection convention at once.  Returns (value, tail bound).
    """
    z = complex(getattr(z, "z", z))
    rz = abs(z)
    if rz >= 1.0:
        raise ValueError("v''' is evaluated at interior points only")
    t_max = quad.exterior_t_max
    x_min = quad.edge_frac * (1.0 - rz)
    x, w = _log_simpson(x_min, t_max - 1.0, quad.nodes_per_octave)
    t = 1.0 + x
    total = 0j
    dens = []
    for tj, wj in zip(t, w):
        width = max(tj - rz, 2.0 * math.pi / quad.n_cap)
        n = 1 << max(6, math.ceil(math.log2(2.0 * math.pi / (quad.peak_frac * width))))
        n = min(n, quad.n_cap)
        zeta = tj * np.exp(1j * _unit_angles(n))
        mirror = 1.0 / np.conjugate(zeta)
        vals, _ = field.eval_batch(mirror)
        mu_plus = vals * (np.conjugate(zeta) / zeta) ** 2
        ring = tj * (2.0 * math.pi / n) * np.sum(mu_plus / (zeta - z) ** 4)
        total += wj * ring
        if len(dens) < 2:
            dens.append(complex(ring))
    # the band (1, 1 + x_min) is dropped by the grid; extrapolate the
    # ring density through the first two nodes to cover it
    slope = (dens[1] - dens[0]) / (t[1] - t[0])
    total += x_min * dens[0] - 0.5 * x_min ** 2 * slope
    tail = (6.0 / math.pi) * field.norm_inf * 2.0 * math.pi \
        * (0.5 / (t_max - rz) ** 2 + rz / (3.0 * (t_max - rz) ** 3))
    return V3_PREFACTOR * complex(total), tail


class HalfplaneOracle(NamedTuple):
    closed_form: complex
    quadrature: complex
    rel_diff: float
    tail_estimate: float
    tail_flagged: bool


def v3_radial_halfplane_oracle(k: Callable[[np.ndarray], object], z: complex,
                               t_max: float = 800.0, n_radial_octave: int = 32,
                               n_angular: int = 2048) -> HalfplaneOracle:
    """Radial coefficient on the upper half-plane against its closed form.

    For mu(zeta) = k(arg zeta) zeta/conj(zeta) on Im zeta > 0 and a
    target z with Im z < 0, the kernel integral collapses to
    -(1/pi) z^(-2) integral of k over (0, pi); for k = 1 that is
    -1/z^2, confirmed analytically by the residue computation of the
    radial integral.  The direct truncated quadrature is returned
    alongside for comparison.
    """
    z = complex(z)
    if z.imag >= 0:
        raise ValueError("the target must sit in the lower half-plane")
    theta = (np.arange(n_angular) + 0.5) * math.pi / n_angular
    k_vals = np.asarray(k(theta), dtype=float) * np.ones_like(theta)
    k_integral = float(k_vals.mean() * math.pi)
    closed = -(1.0 / math.pi) * k_integral / z ** 2

    scale = max(abs(z), 1.0)
    t, w = _log_simpson(1e-4 * scale, t_max * scale, n_radial_octave)
    phase = np.exp(1j * theta)
    ring_mu = k_vals * phase / np.conjugate(phase)
    total = 0j
    for tj, wj in zip(t, w):
        zeta = tj * phase
        total += wj * tj * (math.pi / n_angular) * np.sum(ring_mu / (zeta - z) ** 4)
    quadrature = V3_PREFACTOR * complex(total)

    t_edge = t_max * scale
    k_sup = float(np.max(np.abs(k_vals)))
    dist = abs(t_edge - abs(z))
    tail = (6.0 / math.pi) * k_sup * math.pi * (
        0.5 / dist ** 2 + abs(z) / (3.0 * dist ** 3))
    rel = abs(quadrature - closed) / max(abs(closed), 1e-300)
    return HalfplaneOracle(closed_form=closed, quadrature=quadrature,
                           rel_diff=rel, tail_estimate=tail,
                           tail_flagged=tail > 1e-4)


class RadiusAverage(NamedTuple):
    r: float
    value: float
    residual: float
    n_theta: int
    indeterminate_fraction: float


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _circle_theta_count(r: float, n_theta: Optional[int]) -> int:
    if n_theta is None:
        n_theta = max(256, int(16.0 / (1.0 - r)))
    return _next_pow2(n_theta)


class _CircleSweep(NamedTuple):
    values: np.ndarray
    diffs: np.ndarray
    stall_budget: float
    indeterminate_fraction: float


def _circle_values(field: BeltramiField, r: float, n_theta: int,
                   quad: QuadConfig) -> _CircleSweep:
    """v''' on the uniform circle grid with per-node error estimates.

    Rings are streamed one at a time: sampled, refined in place until
    the fold of their modes moves less than their share of the error
    budget (by Parseval the L2 mode norm is the rms move over circle
    nodes, the right metric for a mean-square target), folded into the
    accumulators, then dropped.  Nothing is cached across rings, so
    the angular ceiling can sit far above the cached grid's without
    exhausting memory; rings that hit the ceiling anyway add their
    unmet tolerance to the stall budget.
    """
    x_min = quad.edge_frac * (1.0 - r)
    x, wts = _log_simpson(x_min, 1.0, quad.nodes_per_octave)
    s_nodes = (1.0 - x)[::-1].copy()
    wts = wts[::-1].copy()
    scale = max(POINT_BOUND * field.norm_inf, 1e-12) \
        * poincare_density(r) ** 2 / abs(V3_PREFACTOR)
    weight_total = float(np.dot(wts, s_nodes))
    coef0 = np.zeros(n_theta, dtype=complex)
    coef1 = np.zeros(n_theta, dtype=complex)
    stall_budget = 0.0
    evals = 0
    bad = 0
    dens_tail: list[tuple[float, float, np.ndarray]] = []
    for i in range(s_nodes.size):
        s = s_nodes[i]
        if s == 0.0:
            continue
        share = max(wts[i] * s / weight_total, 0.02)
        tol_i = quad.refine_tol * scale * share
        rs = r * s
        width = max(1.0 - rs, 2.0 * math.pi / quad.n_cap_stream)
        n_req = 2.0 * math.pi / (quad.peak_frac * width)
        n = quad.n_base << max(0, math.ceil(math.log2(max(n_req, 1.0)
                                                      / quad.n_base)))
        n = min(n, quad.n_cap_stream)
        phi = _unit_angles(n)
        vals, ok = field.eval_batch(s * np.exp(1j * phi))
        g = vals * np.exp(-8j * phi)
        evals += n
        bad += int(n - np.count_nonzero(ok))
        cur = np.zeros(n_theta, dtype=complex)
        _fold_modes(np.fft.fft(g), rs, wts[i] * s * (2.0 * math.pi / n), cur)
        while True:
            if 2 * n > quad.n_cap_stream:
                stall_budget += tol_i * abs(V3_PREFACTOR)
                nxt = cur
                break
            phi_odd = 2.0 * math.pi * np.arange(1, 2 * n, 2) / (2 * n)
            vals, ok = field.eval_batch(s * np.exp(1j * phi_odd))
            evals += n
            bad += int(n - np.count_nonzero(ok))
            doubled = np.empty(2 * n, dtype=complex)
            doubled[::2] = g
            doubled[1::2] = vals * np.exp(-8j * phi_odd)
            g = doubled
            n *= 2
            nxt = np.zeros(n_theta, dtype=complex)
            _fold_modes(np.fft.fft(g), rs, wts[i] * s * (2.0 * math.pi / n), nxt)
            if float(np.linalg.norm(nxt - cur)) <= tol_i:
                break
            cur = nxt
        coef0 += cur
        coef1 += nxt
        dens_tail.append((s, wts[i], nxt))
        if len(dens_tail) > 2:
            dens_tail.pop(0)
    # edge-band extrapolation, mode by mode, from the two deepest rings
    (sp, wp, fp), (sl, wl, fl) = dens_tail
    dens_prev = fp / wp
    dens_last = fl / wl
    second = 0.5 * x_min ** 2 * (dens_last - dens_prev) / (sl - sp)
    corr = x_min * dens_last + second
    vals0 = V3_PREFACTOR * n_theta * np.fft.ifft(coef0 + corr)
    vals1 = V3_PREFACTOR * n_theta * np.fft.ifft(coef1 + corr)
    curvature = abs(V3_PREFACTOR) * n_theta * np.abs(np.fft.ifft(second))
    diffs = np.abs(vals1 - vals0) + 2.0 * curvature
    return _CircleSweep(values=vals1, diffs=diffs, stall_budget=stall_budget,
                        indeterminate_fraction=bad / evals if evals else 0.0)


def wp_circle_average(field: BeltramiField, r: float,
                      n_theta: Optional[int] = None,
                      quad: Optional[QuadConfig] = None,
                      grid: Optional[_PolarGrid] = None,
                      method: str = "spectral") -> RadiusAverage:
    """I_r = mean over the circle |z| = r of |v'''(z)/rho(z)^2|^2.

    The default path folds every quadrature ring into the circle's
    Fourier modes, which reproduces the per-node trapezoid sums exactly
    while touching each ring once.  method="pointwise" instead calls
    the adaptive single-point evaluator on every node; it is orders of
    magnitude slower and exists as an independent consistency route.
    With quad=None the spectral path runs on CIRCLE_QUAD, the pointwise
    one on the oracle-grade DEFAULT_QUAD.
    """
    if not 0.0 < r < 1.0:
        raise ValueError("circle radius must sit in (0, 1)")
    if quad is None:
        quad = CIRCLE_QUAD if method == "spectral" else DEFAULT_QUAD
    n_theta = _circle_theta_count(r, n_theta)
    rho2 = poincare_density(r) ** 2
    if method == "pointwise":
        if grid is None:
            grid = prepare_quadrature(field, r, quad)
        vals = np.empty(n_theta, dtype=complex)
        diffs = np.empty(n_theta)
        for m in range(n_theta):
            rep = _v3_point(grid, r * cmath.exp(2j * math.pi * m / n_theta))
            vals[m] = rep.value
            diffs[m] = rep.residual
        indeterminate = grid.indeterminate_fraction()
    elif method == "spectral":
        sweep = _circle_values(field, r, n_theta, quad)
        vals = sweep.values
        diffs = sweep.diffs + sweep.stall_budget
        indeterminate = sweep.indeterminate_fraction
    else:
        raise ValueError(f"unknown method {method!r}")
    value = float(np.mean(np.abs(vals) ** 2)) / rho2 ** 2
    residual = float(np.mean(2.0 * np.abs(vals) * diffs + diffs ** 2)) / rho2 ** 2
    return RadiusAverage(r=float(r), value=value, residual=residual,
                         n_theta=n_theta,
                         indeterminate_fraction=indeterminate)


class WpEstimate(NamedTuple):
    r_schedule: tuple[float, ...]
    i_r: tuple[float, ...]
    value: float
    error_bar: float
    converged: bool
    per_radius: tuple[RadiusAverage, ...]


def wp_norm(field: BeltramiField, r_schedule: Sequence[float],
            quad: Optional[QuadConfig] = None,
            n_theta: Optional[int] = None) -> WpEstimate:
    """Squared WP norm as the plateau of I_r along the schedule.

    The schedule must increase strictly toward 1 with at least four
    radii.  A plateau is a trailing run whose successive differences
    stay below 10% of the level; its mean is the estimate and half its
    range the error bar.  Without a plateau the last value is reported
    with the full range as error bar and converged = False.
    """
    radii = [float(r) for r in r_schedule]
    if len(radii) < 4:
        raise ValueError("need at least four radii")
    if any(not 0.0 < r < 1.0 for r in radii) or any(
            b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must increase strictly inside (0, 1)")
    per_radius = tuple(
        wp_circle_average(field, r, n_theta=n_theta, quad=quad)
        for r in radii)
    i_r = [est.value for est in per_radius]

    run = 1
    for j in range(len(i_r) - 1, 0, -1):
        level = max(abs(i_r[j]), abs(i_r[j - 1]), 1e-300)
        if abs(i_r[j] - i_r[j - 1]) < PLATEAU_REL_STEP * level:
            run += 1
        else:
            break
    if run >= PLATEAU_MIN_RUN:
        seg = i_r[-run:]
        value = float(np.mean(seg))
        error_bar = 0.5 * (max(seg) - min(seg))
        converged = True
    else:
        value = i_r[-1]
        error_bar = max(i_r) - min(i_r)
        converged = False
    return WpEstimate(r_schedule=tuple(radii), i_r=tuple(i_r), value=value,
                      error_bar=error_bar, converged=converged,
                      per_radius=per_radius)


def geometric_radius_schedule(r0: float = 0.9, n: int = 6) -> tuple[float, ...]:
    """Radii 1 - (1 - r0) 2^(-k), k = 0..n-1, marching toward the circle."""
    if not 0.0 < r0 < 1.0 or n < 1:
        raise ValueError("need 0 < r0 < 1 and at least one radius")
    return tuple(1.0 - (1.0 - r0) * 0.5 ** k for k in range(n))


def horocycle_radius_schedule(delta: float, c0: float = 6.4,
                              n: int = 7) -> tuple[float, ...]:
    """Radii 1 - delta c0 2^(-k), k = 0..n-1, scaled to the horocycle depth.

    Keeping 1 - r proportional to delta means every member of a family
    a = e(p/q)(1 - delta) is probed at the same relative depth into its
    boundary collar, so the finite-depth factor in I_r is shared across
    delta and cancels from log-log slopes.
    """
    if not 0.0 < delta * c0 < 1.0 or n < 1:
        raise ValueError("need 0 < delta * c0 < 1 and at least one radius")
    return tuple(1.0 - delta * c0 * 0.5 ** k for k in range(n))


class DecayFit(NamedTuple):
    p: int
    q: int
    deltas: tuple[float, ...]
    values: tuple[float, ...]
    slope: float
    intercept: float
    plateau_constants: tuple[float, ...]
    converged: tuple[bool, ...]
    estimates: tuple[WpEstimate, ...]


def decay_fit(p: int, q: int, lam: complex = 1.0 + 0j,
              deltas: Sequence[float] = DEFAULT_DELTAS,
              alpha: float = 0.5, depth_start: float = 6.4, n_radii: int = 7,
              quad: Optional[QuadConfig] = None) -> DecayFit:
    """Fit log I[mu_half] against log delta along a = e(p/q)(1 - delta).

    The expected slope is 1/2, and I/sqrt(delta) is returned per delta
    as the sequence of plateau constants (squared C' values).  Each
    delta runs on its own horocycle_radius_schedule, so all of them are
    truncated at the same relative collar depth and the fit compares
    like with like.  Any schedule that fails to plateau is flagged per
    delta; the fit still runs on whatever values came out.
    """
    deltas = tuple(float(d) for d in deltas)
    if any(not 0.0 < d <= 0.05 for d in deltas):
        raise ValueError("delta values must sit in (0, 0.05]")
    root = cmath.exp(2j * math.pi * p / q)
    estimates = []
    for d in deltas:
        frame = GardenFrame(root * (1.0 - d), p, q, alpha=alpha)
        field = half_optimal_field(frame, lam=lam)
        schedule = horocycle_radius_schedule(d, c0=depth_start, n=n_radii)
        estimates.append(wp_norm(field, schedule, quad=quad))
    values = tuple(est.value for est in estimates)
    if any(v <= 0.0 for v in values):
        raise ArithmeticError("nonpositive circle average; nothing to fit")
    if len(deltas) >= 2:
        slope, intercept = np.polyfit(np.log(deltas), np.log(values), 1)
    else:
        slope, intercept = math.nan, math.nan
    return DecayFit(p=p, q=q, deltas=deltas, values=values,
                    slope=float(slope), intercept=float(intercept),
                    plateau_constants=tuple(v / math.sqrt(d)
                                            for v, d in zip(values, deltas)),
                    converged=tuple(est.converged for est in estimates),
                    estimates=tuple(estimates))
