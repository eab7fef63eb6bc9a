"""Pure-numpy scatter/gather kernels.

``np.add.at`` is unbuffered and applies updates in index order, so the
accumulation order (and therefore every rounding step) matches the compiled
kernel and the naive per-point scatter loop exactly.
"""

import numpy as np


def scatter_sum(indices: np.ndarray, values: np.ndarray, n_cells: int) -> np.ndarray:
    if indices.shape[0] != values.shape[0]:
        raise ValueError("indices and values disagree on the point count")
    if indices.size and (indices.min() < 0 or indices.max() >= n_cells):
        raise IndexError("cell index out of range")
    out = np.zeros((n_cells, values.shape[1]), dtype=values.dtype)
    np.add.at(out, indices, values)
    return out


def gather(cells: np.ndarray, indices: np.ndarray) -> np.ndarray:
    if indices.size and (indices.min() < 0 or indices.max() >= cells.shape[0]):
        raise IndexError("cell index out of range")
    return cells[indices]
