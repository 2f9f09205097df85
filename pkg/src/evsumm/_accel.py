"""numba switch for the hot kernels.

Set ``EVSUMM_NUMBA=0`` to force the pure-numpy code paths.  When numba is
not importable the numpy paths are used regardless of the flag.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("EVSUMM_NUMBA", "1").lower() not in ("0", "false", "no", "off")


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it untouched."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
