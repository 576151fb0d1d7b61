"""Command-line driver: experiments to CSV, gardens and fields to PPM.

Every subcommand validates its inputs, runs the corresponding module
code, and writes artifacts with a fixed byte layout: CSV rows at 17
significant digits plus one trailing metadata comment, images as binary
P6.  Exit codes: 0 success, 2 invalid configuration, 3 numerical
non-convergence (the outputs are still written, with the reason in the
CSV's reason column).

A JSON config file can stand in for any subset of flags; explicitly
given flags win over the file.  Stochastic commands refuse to run
without a seed so that reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import cmath
import json
import math
import os
import sys
from multiprocessing import Pool
from typing import Optional, Sequence

import numpy as np

from . import __version__
from ._csvio import write_csv
from . import beltrami_wp as bw
from .blaschke_core import as_param
from .circle_dynamics import (
    entropy,
    find_simple_cycle,
    renewal_count,
)
from .gardens import GardenFrame, circle_intersection_measure
from .hyperbolic_geometry import (
    apply_sl2,
    model_metric_rho_alpha,
    random_sl2,
    sl2_reduce,
)
from .render import render_garden, render_vector_field, write_ppm
from .vector_fields import (
    iterate_vs_flow,
    kappa_closed,
    kappa_measure,
    limit_model,
    test_point_grid,
    vf_limit_residual,
    flow,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

# vf-check tolerances, mirrored in the CSV threshold column.
VF_SLOPE_BAND = (1.8, 2.2)
VF_SEMIGROUP_TOL = 1e-6
VF_PULLBACK_TOL = 1e-10
MODEL_METRIC_TOL = 1e-10


def _parse_pq(text: str) -> tuple[int, int]:
    try:
        p_str, q_str = text.split("/")
        p, q = int(p_str), int(q_str)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected p/q, got {text!r}")
    if q <= 0 or p < 0 or p >= q and (p, q) != (0, 1):
        raise argparse.ArgumentTypeError(f"need 0 <= p < q, got {text!r}")
    if math.gcd(p, q) != 1:
        raise argparse.ArgumentTypeError(f"{text!r} is not reduced")
    return p, q


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse complex {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}")


def _resolve(args: argparse.Namespace, config: dict, name: str, default):
    """Flag if given, else config value, else the built-in default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if name in config:
        return config[name]
    return default


def _effective_a(args, config, parser) -> complex:
    """Either --a directly or the horoball point e(p/q)(1 - eta/q^2)."""
    a = _resolve(args, config, "a", None)
    if a is not None:
        return _parse_complex(str(a)) if not isinstance(a, complex) else a
    eta = _resolve(args, config, "eta", None)
    pq = _resolve(args, config, "pq", None)
    if eta is None or pq is None:
        parser.error("need --a, or --eta together with --pq")
    p, q = _parse_pq(pq) if isinstance(pq, str) else pq
    return cmath.exp(2j * math.pi * p / q) * (1.0 - float(eta) / q**2)


def _need_seed(args, config, parser) -> int:
    seed = _resolve(args, config, "seed", None)
    if seed is None:
        parser.error("this command samples randomly; --seed is mandatory")
    return int(seed)


def _workers(args, config) -> int:
    w = _resolve(args, config, "workers", None)
    if w is None:
        w = os.environ.get("WPLAB_WORKERS", "1")
    return max(1, int(w))


def _config_dict(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    with open(args.config) as fh:
        loaded = json.load(fh)
    if not isinstance(loaded, dict):
        raise SystemExit("config file must hold a JSON object")
    return loaded


def _meta(args, config, seed="") -> dict:
    """Everything that determines the run, for the CSV hash line."""
    merged = {k: v for k, v in vars(args).items()
              if k not in ("func", "config") and v is not None}
    for key, val in config.items():
        merged.setdefault(key, val)
    merged["version"] = __version__
    merged["seed"] = seed
    return merged


def _emit(path, header, rows, args, config, seed="") -> None:
    meta = _meta(args, config, seed)
    write_csv(path, header, rows, version=__version__, seed=seed,
              config=meta)
    print(f"wrote {path}")


# ---------------------------------------------------------------- commands


def _cmd_cycle(args, parser) -> int:
    config = _config_dict(args)
    a = _effective_a(args, config, parser)
    pq = _resolve(args, config, "pq", None)
    if pq is None:
        parser.error("cycle needs --pq")
    p, q = _parse_pq(pq) if isinstance(pq, str) else pq
    out = _resolve(args, config, "out", "cycle.csv")
    header = ("a", "p", "q", "index", "xi_re", "xi_im", "m", "L", "reason")
    try:
        cyc = find_simple_cycle(a, p, q)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        _emit(out, header, [[a, p, q, "", "", "", "", "", f"cycle:{exc}"]],
              args, config)
        return EXIT_NUMERIC
    rows = [[a, p, q, i, float(z.real), float(z.imag), cyc.m, cyc.L, ""]
            for i, z in enumerate(cyc.xi)]
    _emit(out, header, rows, args, config)
    return EXIT_OK


def _cmd_entropy(args, parser) -> int:
    config = _config_dict(args)
    a = _effective_a(args, config, parser)
    out = _resolve(args, config, "out", "entropy.csv")
    res = entropy(a)
    rows = [[a, res.h_jensen, res.h_quad, abs(res.h_jensen - res.h_quad), ""]]
    _emit(out, ("a", "h_jensen", "h_quad", "abs_diff", "reason"),
          rows, args, config)
    return EXIT_OK


def _cmd_renewal(args, parser) -> int:
    config = _config_dict(args)
    a = _effective_a(args, config, parser)
    mode = _resolve(args, config, "mode", "boundary")
    base = _resolve(args, config, "base", None)
    if base is None:
        base = 1.0 + 0.0j if mode == "boundary" else 0.5 + 0.0j
    elif not isinstance(base, complex):
        base = _parse_complex(str(base))
    budget = float(_resolve(args, config, "R", 12.0))
    out = _resolve(args, config, "out", "renewal.csv")
    header = ("a", "mode", "base_re", "base_im", "R", "count", "h",
              "normalized_ratio", "ks_statistic", "reason")
    try:
        stats = renewal_count(a, base, budget, mode=mode)
    except (ArithmeticError, RuntimeError) as exc:
        _emit(out, header,
              [[a, mode, base.real, base.imag, budget, "", "", "", "",
                f"renewal:{exc}"]], args, config)
        return EXIT_NUMERIC
    rows = [[a, mode, base.real, base.imag, budget, stats.count, stats.h,
             stats.normalized_ratio, stats.ks_statistic, ""]]
    _emit(out, header, rows, args, config)
    return EXIT_OK


def _measure_one(task):
    frame, r, n_samples, seed = task
    return circle_intersection_measure(frame, r, n_samples=n_samples,
                                       seed=seed)


def _cmd_garden_measure(args, parser) -> int:
    config = _config_dict(args)
    a = _effective_a(args, config, parser)
    pq = _resolve(args, config, "pq", "0/1")
    p, q = _parse_pq(pq) if isinstance(pq, str) else pq
    alpha = float(_resolve(args, config, "alpha", 0.5))
    seed = _need_seed(args, config, parser)
    n_samples = int(_resolve(args, config, "samples", 200000))
    radii = _resolve(args, config, "r", None)
    if radii is None:
        radii = bw.geometric_radius_schedule(
            float(_resolve(args, config, "r0", 0.9)),
            int(_resolve(args, config, "n_radii", 6)))
    elif isinstance(radii, str):
        radii = _parse_floats(radii)
    elif isinstance(radii, float):
        radii = (radii,)
    out = _resolve(args, config, "out", "garden_measure.csv")
    frame = GardenFrame(a, p, q, alpha=alpha)
    tasks = [(frame, r, n_samples, seed + i) for i, r in enumerate(radii)]
    workers = _workers(args, config)
    if workers > 1:
        with Pool(workers) as pool:
            results = pool.map(_measure_one, tasks)
    else:
        results = [_measure_one(t) for t in tasks]
    header = ("a", "p", "q", "alpha", "r", "measure", "ci",
              "indeterminate_fraction", "n_samples", "reason")
    rows = [[a, p, q, alpha, m.r, m.measure, m.ci, m.indeterminate_fraction,
             m.n_samples, "" if math.isfinite(m.measure) else "all samples indeterminate"]
            for m in results]
    _emit(out, header, rows, args, config, seed=seed)
    bad = any(not math.isfinite(m.measure) for m in results)
    return EXIT_NUMERIC if bad else EXIT_OK


def _cmd_wp_norm(args, parser) -> int:
    config = _config_dict(args)
    a = _effective_a(args, config, parser)
    pq = _resolve(args, config, "pq", "0/1")
    p, q = _parse_pq(pq) if isinstance(pq, str) else pq
    alpha = float(_resolve(args, config, "alpha", 0.5))
    kind = _resolve(args, config, "field", "half")
    lam = _resolve(args, config, "lam", 1.0 + 0j)
    if not isinstance(lam, complex):
        lam = _parse_complex(str(lam))
    out = _resolve(args, config, "out", "wp_norm.csv")
    frame = GardenFrame(a, p, q, alpha=alpha)
    if kind == "half":
        field = bw.half_optimal_field(frame, lam=lam)
    elif kind == "optimal":
        field = bw.optimal_field(a, lam=lam)
    else:
        parser.error(f"unknown field kind {kind!r}")
    schedule = _resolve(args, config, "r", None)
    if schedule is None:
        if bool(_resolve(args, config, "horocycle", False)):
            schedule = bw.horocycle_radius_schedule(
                1.0 - abs(as_param(a).a),
                n=int(_resolve(args, config, "n_radii", 7)))
        else:
            schedule = bw.geometric_radius_schedule(
                float(_resolve(args, config, "r0", 0.9)),
                int(_resolve(args, config, "n_radii", 6)))
    elif isinstance(schedule, str):
        schedule = _parse_floats(schedule)
    est = bw.wp_norm(field, schedule)
    header = ("kind", "a", "p", "q", "alpha", "field", "r", "i_r",
              "residual", "n_theta", "value", "error_bar", "converged",
              "reason")
    rows = [["radius", a, p, q, alpha, kind, ra.r, ra.value, ra.residual,
             ra.n_theta, "", "", "", ""] for ra in est.per_radius]
    reason = "" if est.converged else "no trailing plateau in I_r"
    rows.append(["estimate", a, p, q, alpha, kind, "", "", "", "",
                 est.value, est.error_bar, est.converged, reason])
    _emit(out, header, rows, args, config)
    return EXIT_OK if est.converged else EXIT_NUMERIC


def _cmd_decay_fit(args, parser) -> int:
    config = _config_dict(args)
    pq = _resolve(args, config, "pq", None)
    if pq is None:
        parser.error("decay-fit needs --pq")
    p, q = _parse_pq(pq) if isinstance(pq, str) else pq
    deltas = _resolve(args, config, "deltas", None)
    if deltas is None:
        deltas = bw.DEFAULT_DELTAS
    elif isinstance(deltas, str):
        deltas = _parse_floats(deltas)
    alpha = float(_resolve(args, config, "alpha", 0.5))
    depth_start = float(_resolve(args, config, "depth_start", 6.4))
    n_radii = int(_resolve(args, config, "n_radii", 7))
    out = _resolve(args, config, "out", "decay_fit.csv")
    fit = bw.decay_fit(p, q, deltas=deltas, alpha=alpha,
                       depth_start=depth_start, n_radii=n_radii)
    header = ("kind", "p", "q", "alpha", "delta", "i_half",
              "plateau_constant", "converged", "slope", "intercept",
              "reason")
    rows = []
    for d, v, c, conv in zip(fit.deltas, fit.values, fit.plateau_constants,
                             fit.converged):
        rows.append(["delta", p, q, alpha, d, v, c, conv, "", "",
                     "" if conv else "no trailing plateau in I_r"])
    rows.append(["fit", p, q, alpha, "", "", "", "", fit.slope,
                 fit.intercept, ""])
    _emit(out, header, rows, args, config)
    return EXIT_OK if all(fit.converged) else EXIT_NUMERIC


def _cmd_vf_check(args, parser) -> int:
    config = _config_dict(args)
    q = int(_resolve(args, config, "q", 1))
    eta = float(_resolve(args, config, "eta", 0.5))
    out = _resolve(args, config, "out", "vf_check.csv")
    model = limit_model(q)
    rng = np.random.default_rng(0)
    pts = []
    while len(pts) < 1000:
        z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        if abs(z) < 0.99 and all(abs(z - pl) > 1e-2 for pl in model.poles):
            pts.append(z)
    pts = np.array(pts)
    pullback = float(np.max(np.abs(
        np.asarray(kappa_measure(model.measure, pts))
        - np.asarray(kappa_closed(q, pts)))))
    z0 = 0.3 + 0.4j
    semigroup = abs(flow(model, flow(model, z0, 0.5), 0.5)
                    - flow(model, z0, 0.25))
    res = vf_limit_residual(0 if q == 1 else 1, q)
    sup_distances = []
    for k in (2, 3):
        a = cmath.exp(2j * math.pi * (0 if q == 1 else 1) / q) * (1 - 10.0**-k)
        sup_distances.append(iterate_vs_flow(a, 0 if q == 1 else 1, q, eta))
    decreasing = all(b < x for x, b in zip(sup_distances, sup_distances[1:]))

    header = ("metric", "q", "eta", "value", "threshold", "status", "reason")
    ok_slope = VF_SLOPE_BAND[0] <= res.order_slope <= VF_SLOPE_BAND[1]
    rows = [
        ["pullback_identity", q, "", pullback, VF_PULLBACK_TOL,
         "pass" if pullback < VF_PULLBACK_TOL else "fail", ""],
        ["semigroup_residual", q, "", semigroup, VF_SEMIGROUP_TOL,
         "pass" if semigroup < VF_SEMIGROUP_TOL else "fail", ""],
        ["order_slope", q, "", res.order_slope,
         f"[{VF_SLOPE_BAND[0]},{VF_SLOPE_BAND[1]}]",
         "pass" if ok_slope else "fail", ""],
        ["sup_error_finest", q, "", res.sup_error, "", "info", ""],
    ]
    for k, d in zip((2, 3), sup_distances):
        rows.append([f"iterate_vs_flow_1e-{k}", q, eta, d, "", "info", ""])
    rows.append(["iterate_vs_flow_decreasing", q, eta, decreasing, "",
                 "pass" if decreasing else "fail",
                 "" if decreasing else "sup distance did not decrease"])
    _emit(out, header, rows, args, config)
    all_ok = ok_slope and decreasing and pullback < VF_PULLBACK_TOL \
        and semigroup < VF_SEMIGROUP_TOL
    return EXIT_OK if all_ok else EXIT_NUMERIC


def _cmd_render_garden(args, parser) -> int:
    config = _config_dict(args)
    a = _effective_a(args, config, parser)
    pq = _resolve(args, config, "pq", "0/1")
    p, q = _parse_pq(pq) if isinstance(pq, str) else pq
    alpha = float(_resolve(args, config, "alpha", 0.5))
    size = int(_resolve(args, config, "size", 512))
    out = _resolve(args, config, "out", "garden.ppm")
    frame = GardenFrame(a, p, q, alpha=alpha)
    raster = render_garden(frame, size=size)
    write_ppm(raster.image, out)
    print(f"wrote {out}")
    sidecar = os.path.splitext(out)[0] + "_report.csv"
    frac = raster.indeterminate_pixels / max(raster.disk_pixels, 1)
    _emit(sidecar,
          ("a", "p", "q", "alpha", "size", "disk_pixels",
           "indeterminate_pixels", "indeterminate_fraction", "reason"),
          [[a, p, q, alpha, size, raster.disk_pixels,
            raster.indeterminate_pixels, frac, ""]],
          args, config)
    return EXIT_OK


def _cmd_render_vf(args, parser) -> int:
    config = _config_dict(args)
    q = int(_resolve(args, config, "q", 1))
    trace = float(_resolve(args, config, "trace", 0.0))
    size = int(_resolve(args, config, "size", 512))
    out = _resolve(args, config, "out", "vf.ppm")
    image = render_vector_field(limit_model(q, trace=trace), size=size)
    write_ppm(image, out)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_model_metric(args, parser) -> int:
    config = _config_dict(args)
    n_points = int(_resolve(args, config, "points", 100))
    q_max = int(_resolve(args, config, "q_max", 50))
    seed = _need_seed(args, config, parser)
    out = _resolve(args, config, "out", "model_metric.csv")
    rng = np.random.default_rng(seed)
    header = ("tau_re", "tau_im", "rho_quarter", "invariance_residual",
              "reduce_vs_brute", "reason")
    rows = []
    worst = 0.0
    failures = 0
    for _ in range(n_points):
        tau = complex(rng.uniform(-2.0, 2.0), rng.uniform(0.05, 3.0))
        mat = random_sl2(rng)
        rho = model_metric_rho_alpha(tau, 0.25)
        gtau = apply_sl2(mat, tau)
        c, d = mat[2], mat[3]
        rho_pulled = model_metric_rho_alpha(gtau, 0.25) / abs(c * tau + d)**2
        resid = abs(rho_pulled - rho) / rho
        worst = max(worst, resid)
        try:
            sl2_reduce(tau, q_max=q_max)
            agree = True
            reason = ""
        except ArithmeticError as exc:
            agree = False
            failures += 1
            reason = f"reduce:{exc}"
        rows.append([tau.real, tau.imag, rho, resid, agree, reason])
    status_reason = "" if worst < MODEL_METRIC_TOL and failures == 0 else \
        f"worst invariance residual {worst:.3g}, {failures} reduce failures"
    rows.append(["", "", "", worst, failures == 0, status_reason])
    _emit(out, header, rows, args, config, seed=seed)
    return EXIT_OK if not status_reason else EXIT_NUMERIC


# ----------------------------------------------------------------- parser


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="JSON file of flag values; flags win")
    sp.add_argument("--out", help="output path")
    sp.add_argument("--seed", type=int, help="RNG seed (stochastic commands)")
    sp.add_argument("--workers", type=int,
                    help="worker pool size (default WPLAB_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wplab",
        description="Blaschke-product dynamics and Weil-Petersson "
                    "experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("cycle", help="simple p/q cycle on the circle")
    sp.add_argument("--a", help="parameter a (complex)")
    sp.add_argument("--pq", help="rotation number p/q")
    sp.add_argument("--eta", type=float, help="horoball depth parameter")
    _add_common(sp)
    sp.set_defaults(func=_cmd_cycle)

    sp = sub.add_parser("entropy", help="entropy two ways at a")
    sp.add_argument("--a")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--pq")
    _add_common(sp)
    sp.set_defaults(func=_cmd_entropy)

    sp = sub.add_parser("renewal", help="preimage-count renewal statistics")
    sp.add_argument("--a")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--pq")
    sp.add_argument("--mode", choices=("boundary", "interior"))
    sp.add_argument("--base", help="base point (complex)")
    sp.add_argument("--R", type=float, help="derivative budget")
    _add_common(sp)
    sp.set_defaults(func=_cmd_renewal)

    sp = sub.add_parser("garden-measure",
                        help="circle measure of the garden (stochastic)")
    sp.add_argument("--a")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--pq")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--r", help="comma-separated radii")
    sp.add_argument("--r0", type=float)
    sp.add_argument("--n-radii", dest="n_radii", type=int)
    sp.add_argument("--samples", type=int)
    _add_common(sp)
    sp.set_defaults(func=_cmd_garden_measure)

    sp = sub.add_parser("wp-norm", help="WP norm estimate of a field")
    sp.add_argument("--a")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--pq")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--field", choices=("half", "optimal"))
    sp.add_argument("--lam", help="torus coefficient (complex)")
    sp.add_argument("--r", help="comma-separated radii")
    sp.add_argument("--r0", type=float)
    sp.add_argument("--n-radii", dest="n_radii", type=int)
    sp.add_argument("--horocycle", action="store_const", const=True,
                    help="use the depth-proportional radius schedule")
    _add_common(sp)
    sp.set_defaults(func=_cmd_wp_norm)

    sp = sub.add_parser("decay-fit", help="I[mu_half] decay against delta")
    sp.add_argument("--pq")
    sp.add_argument("--deltas", help="comma-separated deltas")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--depth-start", dest="depth_start", type=float)
    sp.add_argument("--n-radii", dest="n_radii", type=int)
    _add_common(sp)
    sp.set_defaults(func=_cmd_decay_fit)

    sp = sub.add_parser("vf-check", help="limiting vector field diagnostics")
    sp.add_argument("--q", type=int)
    sp.add_argument("--eta", type=float)
    _add_common(sp)
    sp.set_defaults(func=_cmd_vf_check)

    sp = sub.add_parser("render-garden", help="garden raster to PPM")
    sp.add_argument("--a")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--pq")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--size", type=int)
    _add_common(sp)
    sp.set_defaults(func=_cmd_render_garden)

    sp = sub.add_parser("render-vf", help="limiting vector field to PPM")
    sp.add_argument("--q", type=int)
    sp.add_argument("--trace", type=float)
    sp.add_argument("--size", type=int)
    _add_common(sp)
    sp.set_defaults(func=_cmd_render_vf)

    sp = sub.add_parser("model-metric",
                        help="invariance checks of the model metric")
    sp.add_argument("--points", type=int)
    sp.add_argument("--q-max", dest="q_max", type=int)
    _add_common(sp)
    sp.set_defaults(func=_cmd_model_metric)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
