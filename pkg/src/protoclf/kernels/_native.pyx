# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled similarity kernels: the hot inner loops of forward and loss passes.

Same contract as ``protoclf.kernels.pure``; plain C loops over contiguous
float64 buffers.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "native"


def pairwise_cosine(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nb_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] nb = nb_arr
    cdef Py_ssize_t i, j, t
    cdef double acc, dot, na

    for j in range(m):
        acc = 0.0
        for t in range(d):
            acc += b[j, t] * b[j, t]
        nb[j] = sqrt(acc)

    for i in range(n):
        acc = 0.0
        for t in range(d):
            acc += a[i, t] * a[i, t]
        na = sqrt(acc)
        for j in range(m):
            dot = 0.0
            for t in range(d):
                dot += a[i, t] * b[j, t]
            o[i, j] = dot / (na * nb[j])
    return out


def pairwise_neg_l2(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, t
    cdef double acc, diff

    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(d):
                diff = a[i, t] - b[j, t]
                acc += diff * diff
            o[i, j] = -sqrt(acc)
    return out
