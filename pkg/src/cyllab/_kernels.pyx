# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled propagation kernel: first-order mode marching along the s-axis.

Contract mirrors cyllab._kernels_py; see that module for parameter docs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def propagate_first_order(double[::1] E,
                          double[:, ::1] w_first,
                          double[:, ::1] w_interior,
                          double[:, ::1] w_last,
                          double complex[:, :, ::1] rhs,
                          double complex[:, ::1] u0,
                          double sign):
    cdef Py_ssize_t S = rhs.shape[0]
    cdef Py_ssize_t M = rhs.shape[1]
    cdef Py_ssize_t N = rhs.shape[2]
    out_arr = np.empty((S, M, N), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    cdef Py_ssize_t j, m, c, base
    cdef double complex quad
    cdef double w0, w1, w2, w3
    cdef double[:, ::1] w

    for m in range(M):
        for c in range(N):
            out[0, m, c] = u0[m, c]

    with nogil:
        for j in range(S - 1):
            if j == 0:
                w = w_first
                base = 0
            elif j == S - 2:
                w = w_last
                base = S - 4
            else:
                w = w_interior
                base = j - 1
            for m in range(M):
                w0 = w[m, 0]
                w1 = w[m, 1]
                w2 = w[m, 2]
                w3 = w[m, 3]
                for c in range(N):
                    quad = (w0 * rhs[base, m, c]
                            + w1 * rhs[base + 1, m, c]
                            + w2 * rhs[base + 2, m, c]
                            + w3 * rhs[base + 3, m, c])
                    out[j + 1, m, c] = E[m] * out[j, m, c] + sign * quad
    return out_arr


def propagate_homogeneous(double[::1] E, Py_ssize_t n_samples,
                          double complex[:, ::1] u0):
    cdef Py_ssize_t M = u0.shape[0]
    cdef Py_ssize_t N = u0.shape[1]
    out_arr = np.empty((n_samples, M, N), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    cdef Py_ssize_t j, m, c

    for m in range(M):
        for c in range(N):
            out[0, m, c] = u0[m, c]
    with nogil:
        for j in range(n_samples - 1):
            for m in range(M):
                for c in range(N):
                    out[j + 1, m, c] = E[m] * out[j, m, c]
    return out_arr
