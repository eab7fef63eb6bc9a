"""Hot scatter/gather kernels with backend selection at import.

The compiled extension is used when available; otherwise the pure-numpy
fallback takes over. Set BEVDA_FORCE_FALLBACK=1 to skip the extension (used
by the pool benchmark and the backend-equivalence tests). Both backends
accumulate in ascending point order, so they are bit-identical.
"""

import os

import numpy as np

from . import _fallback

if os.environ.get("BEVDA_FORCE_FALLBACK") == "1":
    _native = None
else:
    try:
        from . import _native
    except ImportError:
        _native = None

BACKEND = "native" if _native is not None else "python"


def scatter_sum(indices: np.ndarray, values: np.ndarray, n_cells: int) -> np.ndarray:
    """Sum (P, C) rows into an (n_cells, C) table at ``indices``, in point order."""
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    values = np.ascontiguousarray(values)
    if _native is not None and values.dtype == np.float64:
        return _native.scatter_sum(indices, values, n_cells)
    return _fallback.scatter_sum(indices, values, n_cells)


def gather(cells: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Row lookup out[p] = cells[indices[p]]; the adjoint of scatter_sum."""
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    cells = np.ascontiguousarray(cells)
    if _native is not None and cells.dtype == np.float64:
        return _native.gather(cells, indices)
    return _fallback.gather(cells, indices)
