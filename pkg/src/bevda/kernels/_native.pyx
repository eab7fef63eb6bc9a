# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter/gather kernels for BEV sum pooling.

Accumulation runs sequentially over points in the order given, so results
are bit-identical to a naive per-point scatter loop.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def scatter_sum(cnp.int64_t[::1] indices, cnp.float64_t[:, ::1] values, Py_ssize_t n_cells):
    """Sum rows of ``values`` into ``out[indices[p]]``, in ascending p order."""
    cdef Py_ssize_t n = indices.shape[0]
    cdef Py_ssize_t c = values.shape[1]
    if n != values.shape[0]:
        raise ValueError("indices and values disagree on the point count")
    out_arr = np.zeros((n_cells, c), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t p, j, cell
    for p in range(n):
        cell = indices[p]
        if cell < 0 or cell >= n_cells:
            raise IndexError("cell index out of range")
        for j in range(c):
            out[cell, j] += values[p, j]
    return out_arr


def gather(cnp.float64_t[:, ::1] cells, cnp.int64_t[::1] indices):
    """Row lookup: out[p] = cells[indices[p]]; the adjoint of scatter_sum."""
    cdef Py_ssize_t n = indices.shape[0]
    cdef Py_ssize_t c = cells.shape[1]
    cdef Py_ssize_t n_cells = cells.shape[0]
    out_arr = np.empty((n, c), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t p, j, cell
    for p in range(n):
        cell = indices[p]
        if cell < 0 or cell >= n_cells:
            raise IndexError("cell index out of range")
        for j in range(c):
            out[p, j] = cells[cell, j]
    return out_arr
