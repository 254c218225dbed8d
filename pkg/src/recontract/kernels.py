"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation is used. Both produce identical results. Set
``RECONTRACT_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _chain_py

try:
    if os.environ.get("RECONTRACT_PURE_PYTHON"):
        raise ImportError("compiled kernels disabled by environment")
    from . import _chain as _compiled
except ImportError:
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def chain_argmax(base, lin, points, lam, allowed, backend=None):
    base = np.ascontiguousarray(base, dtype=np.float64)
    lin = np.ascontiguousarray(lin, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    allowed = np.ascontiguousarray(allowed, dtype=np.uint8)
    use = backend or BACKEND
    if use == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        idx, best = _compiled.chain_argmax(base, lin, points, float(lam), allowed)
        return np.asarray(idx), float(best)
    return _chain_py.chain_argmax(base, lin, points, float(lam), allowed)
