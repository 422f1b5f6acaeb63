"""Grid kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; otherwise the pure-Python
module is used. Set ``DIFFNAV_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("DIFFNAV_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

cast_rays = _impl.cast_rays
integrate_rays = _impl.integrate_rays
endpoint_likelihood = _impl.endpoint_likelihood
grid_search = _impl.grid_search
distance_field = _impl.distance_field


def backends():
    """Return ``{name: module}`` for every backend importable in this process."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


__all__ = ["BACKEND", "backends", "cast_rays", "integrate_rays", "endpoint_likelihood", "grid_search",
           "distance_field"]
