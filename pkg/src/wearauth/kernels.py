"""Backend selection for the numeric hot loops.

The compiled ``wearauth._kernels`` extension is used when it imports;
otherwise the numpy implementations in ``wearauth._kernels_py`` are used.
Setting ``WEARAUTH_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("WEARAUTH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

fft_radix2 = _impl.fft_radix2
minkowski_cdist = _impl.minkowski_cdist
best_gini_split = _impl.best_gini_split
smo_solve = _impl.smo_solve


def available_backends():
    """Return ``{name: module}`` for every importable kernel backend."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
