"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  ``XLRA_BACKEND=python`` forces the fallback.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("XLRA_BACKEND", "").lower() == "python":
        raise ImportError("fallback forced by XLRA_BACKEND")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

name = "compiled" if _compiled is not None else "python"
_impl = BACKENDS[name]


def use(backend):
    """Switch the active backend ('compiled' or 'python')."""
    global name, _impl
    if backend not in BACKENDS:
        raise ValueError(f"backend {backend!r} unavailable; have {sorted(BACKENDS)}")
    name = backend
    _impl = BACKENDS[backend]


def voronoi_label(dims, seeds, elongation):
    return _impl.voronoi_label(dims, seeds, elongation)


def cell_matvec(C, v):
    return _impl.cell_matvec(C, v)


def green_update(out_hat, pol_hat, xi, nmat, replace=False):
    return _impl.green_update(out_hat, pol_hat, xi, nmat, replace)
