# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled jet kernels: truncated multivariate series product and univariate composition."""
import numpy as np


def mul(const double[::1] a, const double[::1] b,
        const Py_ssize_t[::1] ia, const Py_ssize_t[::1] ib, const Py_ssize_t[::1] ic,
        Py_ssize_t size):
    out = np.zeros(size)
    cdef double[::1] o = out
    cdef Py_ssize_t t, m = ia.shape[0]
    for t in range(m):
        o[ic[t]] += a[ia[t]] * b[ib[t]]
    return out


def compose(const double[::1] a, const double[::1] taylor,
            const Py_ssize_t[::1] ia, const Py_ssize_t[::1] ib, const Py_ssize_t[::1] ic,
            Py_ssize_t size):
    out = np.zeros(size)
    tmp = np.empty(size)
    cdef double[::1] o = out
    cdef double[::1] w = tmp
    cdef Py_ssize_t t, j, k, m = ia.shape[0]
    cdef Py_ssize_t nt = taylor.shape[0]
    o[0] = taylor[nt - 1]
    for k in range(nt - 2, -1, -1):
        for j in range(size):
            w[j] = 0.0
        # a[0] is skipped: the composition uses the nilpotent part a - a[0]
        for t in range(m):
            if ib[t] != 0:
                w[ic[t]] += o[ia[t]] * a[ib[t]]
        for j in range(size):
            o[j] = w[j]
        o[0] += taylor[k]
    return out
