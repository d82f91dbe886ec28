"""Numba shim.

Hot loops are written once as plain Python over numpy arrays and compiled with
``njit`` when numba is importable.  Setting ``BOUNDEDNOISE_NO_NUMBA=1`` forces
the pure-numpy code paths in :mod:`boundednoise._kernels` instead.
"""
import os
import warnings

_DISABLED = os.environ.get("BOUNDEDNOISE_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by BOUNDEDNOISE_NO_NUMBA")
    from numba import njit, prange

    # an old system TBB only demotes numba to its workqueue/omp layer
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kw):
        if len(args) == 1 and callable(args[0]) and not kw:
            return args[0]
        return lambda f: f


def use_numba() -> bool:
    return HAVE_NUMBA
