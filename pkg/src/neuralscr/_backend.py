"""Kernel backend selection: numba-compiled or pure numpy.

The hot numeric kernels in :mod:`neuralscr._kernels` are written in a
restricted numpy style that numba can compile in nopython mode.  When numba
is importable they are jitted at import time; otherwise the same source runs
as plain vectorized numpy.  The environment variable ``NEURALSCR_BACKEND``
overrides the default:

* ``auto``  (default) -- use numba when available, numpy otherwise
* ``numpy`` -- force the pure-numpy path
* ``numba`` -- require the compiled path, raise if numba is missing
"""

from __future__ import annotations

import os
import warnings

_choice = os.environ.get("NEURALSCR_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    warnings.warn(
        f"unrecognized NEURALSCR_BACKEND={_choice!r}; falling back to 'auto'",
        stacklevel=2,
    )
    _choice = "auto"

USE_NUMBA = False
if _choice in ("auto", "numba"):
    try:
        from numba import njit as _njit

        USE_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise ImportError(
                "NEURALSCR_BACKEND=numba was requested but numba is not installed"
            ) from None

BACKEND = "numba" if USE_NUMBA else "numpy"


def kernel(fn):
    """Decorate a hot kernel: nopython-jit under numba, identity otherwise."""
    if USE_NUMBA:
        return _njit(cache=True)(fn)
    return fn
