"""Backend selection and array-allocating wrappers for the hot loops.

The compiled extension is used when importable.  Setting the environment
variable WPLAB_PURE to a nonempty value forces the numpy fallback.
"""

import os
from typing import NamedTuple

import numpy as np

from . import fallback as _fallback

if os.environ.get("WPLAB_PURE"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback


def backend_name() -> str:
    """Name of the active backend, either 'cython' or 'numpy'."""
    return "numpy" if _impl is _fallback else "cython"


class KoenigsBatch(NamedTuple):
    log_abs_phi: np.ndarray
    im_log_phi: np.ndarray
    log_abs_dphi: np.ndarray
    arg_dphi: np.ndarray
    iterations: np.ndarray
    status: np.ndarray


def koenigs_batch(a, zs, r_stop, n_max, series) -> KoenigsBatch:
    """Koenigs orbit data for a batch of points.

    Returns magnitude/angle splits of phi and phi' together with the
    iteration count and a status flag per point (0 ok, 1 truncated,
    2 pole, 3 grand orbit of 0).  im_log_phi is a continuous branch
    accumulated along the orbit; arg_dphi is only meaningful mod 2 pi.
    """
    zs = np.ascontiguousarray(zs, dtype=np.complex128)
    npts = zs.shape[0]
    out = KoenigsBatch(
        log_abs_phi=np.empty(npts, dtype=np.float64),
        im_log_phi=np.empty(npts, dtype=np.float64),
        log_abs_dphi=np.empty(npts, dtype=np.float64),
        arg_dphi=np.empty(npts, dtype=np.float64),
        iterations=np.empty(npts, dtype=np.int64),
        status=np.empty(npts, dtype=np.int8),
    )
    _impl.koenigs_batch(complex(a), zs, float(r_stop), int(n_max),
                        np.ascontiguousarray(series, dtype=np.complex128),
                        out.log_abs_phi, out.im_log_phi, out.log_abs_dphi,
                        out.arg_dphi, out.iterations, out.status)
    return out


def orbit_enter_batch(a, zs, u1, u2, t1, t2, cap):
    """Saturated-annulus membership by forward iteration, batched.

    Returns (result, steps) with result 1 if the orbit enters the box,
    0 if it escapes past the outer depth, -1 if the step budget ran out.
    """
    zs = np.ascontiguousarray(zs, dtype=np.complex128)
    result = np.empty(zs.shape[0], dtype=np.int8)
    steps = np.empty(zs.shape[0], dtype=np.int64)
    _impl.orbit_enter_batch(complex(a), zs, float(u1), float(u2),
                            float(t1), float(t2), int(cap), result, steps)
    return result, steps
