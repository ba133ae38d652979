# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cubic convolution on sparse mode lists."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def cubic_convolve(const cnp.int64_t[:, ::1] ka, const double[::1] va,
                   const cnp.int64_t[:, ::1] kb, const double[::1] vb,
                   const cnp.int64_t[:, ::1] kc, const double[::1] vc,
                   const cnp.int64_t[::1] lo, const cnp.int64_t[::1] shape):
    """out[a + b - c - lo] += va * vb * vc over every ordered triple.

    Keys are rows of integer coordinates; the result is a dense array of the
    given shape, flattened in C order.
    """
    cdef Py_ssize_t na = ka.shape[0], nb = kb.shape[0], nc = kc.shape[0]
    cdef Py_ssize_t dim = ka.shape[1]
    cdef Py_ssize_t i, j, l, c, flat
    cdef double vab
    cdef cnp.int64_t coord
    strides = np.empty(dim, dtype=np.int64)
    cdef cnp.int64_t[::1] st = strides
    cdef Py_ssize_t total = 1
    for c in range(dim - 1, -1, -1):
        st[c] = total
        total *= shape[c]
    out = np.zeros(total, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(na):
        for j in range(nb):
            vab = va[i] * vb[j]
            if vab == 0.0:
                continue
            for l in range(nc):
                flat = 0
                for c in range(dim):
                    coord = ka[i, c] + kb[j, c] - kc[l, c] - lo[c]
                    flat += coord * st[c]
                o[flat] += vab * vc[l]
    return out
