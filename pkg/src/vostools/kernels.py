"""Backend selection for the pixel kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``VOSTOOLS_PURE`` is set to a non-empty value other
than ``0``, the numpy fallback is used. ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

_force_pure = os.environ.get("VOSTOOLS_PURE", "") not in ("", "0")

_compiled = None
if not _force_pure:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "numpy"

warp_bilinear = _impl.warp_bilinear
warp_nearest = _impl.warp_nearest
boundary_map = _impl.boundary_map
dilate_disk = _impl.dilate_disk
disk = _kernels_py.disk


def backends():
    """Mapping of available backend name to module, for tests and benchmarks."""
    out = {"numpy": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    else:
        try:
            from . import _kernels

            out["cython"] = _kernels
        except ImportError:
            pass
    return out
