# cython: language_level=3
"""Compiled versions of the kernels in ``_kernels_py``.

Same signatures and layout: ``complex128`` states of shape ``(batch, 2**n)``,
qubit 0 is the most significant bit.
"""
import numpy as np
from libc.math cimport exp


def apply_1q(double complex[:, ::1] states, int n, int q, double complex[:, :, ::1] mats):
    cdef Py_ssize_t nb = states.shape[0]
    cdef Py_ssize_t dim = states.shape[1]
    cdef Py_ssize_t stride = 1 << (n - q - 1)
    cdef Py_ssize_t b, i, j
    cdef double complex m00, m01, m10, m11, a0, a1
    for b in range(nb):
        m00 = mats[b, 0, 0]
        m01 = mats[b, 0, 1]
        m10 = mats[b, 1, 0]
        m11 = mats[b, 1, 1]
        i = 0
        while i < dim:
            for j in range(i, i + stride):
                a0 = states[b, j]
                a1 = states[b, j + stride]
                states[b, j] = m00 * a0 + m01 * a1
                states[b, j + stride] = m10 * a0 + m11 * a1
            i += 2 * stride


def apply_cz(double complex[:, ::1] states, int n, int q1, int q2):
    cdef Py_ssize_t nb = states.shape[0]
    cdef Py_ssize_t dim = states.shape[1]
    cdef Py_ssize_t mask = (1 << (n - 1 - q1)) | (1 << (n - 1 - q2))
    cdef Py_ssize_t b, i
    for b in range(nb):
        for i in range(dim):
            if (i & mask) == mask:
                states[b, i] = -states[b, i]


def stein_gram(za, double[:, ::1] sa, zb, double[:, ::1] sb):
    cdef long[:, ::1] a = np.ascontiguousarray(za, dtype=np.int64)
    cdef long[:, ::1] c = np.ascontiguousarray(zb, dtype=np.int64)
    cdef Py_ssize_t ma = a.shape[0]
    cdef Py_ssize_t mb = c.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    out = np.empty((ma, mb), dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef double w_same = 1.0 - exp(-1.0 / n)
    cdef double w_diff = 1.0 - exp(1.0 / n)
    cdef Py_ssize_t i, j, t
    cdef int dist
    cdef double acc, w
    for i in range(ma):
        for j in range(mb):
            dist = 0
            acc = 0.0
            for t in range(n):
                if a[i, t] == c[j, t]:
                    w = w_same
                else:
                    w = w_diff
                    dist += 1
                acc += sa[i, t] * sb[j, t] - w * (sa[i, t] + sb[j, t] - 2.0)
            res[i, j] = exp(-(<double>dist) / n) * acc
    return out
