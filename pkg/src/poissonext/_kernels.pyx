# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled far-field multipole evaluation loop.

Mirrors poissonext._kernels_py.far_accumulate; see that module for the
argument contract.  The Horner recurrence runs with the node loop
innermost over split real/imaginary arrays so the C compiler can
vectorize it; per-node arithmetic is identical to the numpy fallback.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()

cdef double INV2PI = 0.15915494309189535
DEF MAX_NODES = 64


def far_accumulate(cnp.ndarray[cnp.float64_t, ndim=2] out,
                   cnp.ndarray[cnp.complex128_t, ndim=2] tz,
                   cnp.ndarray[cnp.complex128_t, ndim=1] centers,
                   cnp.ndarray[cnp.float64_t, ndim=1] hs,
                   cnp.ndarray[cnp.float64_t, ndim=1] mass,
                   cnp.ndarray[cnp.complex128_t, ndim=2] mom_div,
                   cnp.ndarray[cnp.int64_t, ndim=1] ptr,
                   cnp.ndarray[cnp.int64_t, ndim=1] tgt):
    cdef Py_ssize_t ns = centers.shape[0]
    cdef Py_ssize_t p = mom_div.shape[1]
    cdef Py_ssize_t nq = tz.shape[1]
    cdef Py_ssize_t s, i, q, k, t
    cdef double complex c, dz
    cdef double h, m, logh, cr, ci, dr, di, mag2, inv
    cdef double mr, mi, tr, ti
    cdef double wr[MAX_NODES]
    cdef double wi[MAX_NODES]
    cdef double ar[MAX_NODES]
    cdef double ai[MAX_NODES]
    cdef double base[MAX_NODES]
    if nq > MAX_NODES:
        raise ValueError("far_accumulate: more than 64 nodes per box")
    for s in range(ns):
        c = centers[s]
        cr = c.real
        ci = c.imag
        h = hs[s]
        m = mass[s]
        logh = log(h)
        for i in range(ptr[s], ptr[s + 1]):
            t = tgt[i]
            for q in range(nq):
                dz = tz[t, q]
                dr = dz.real - cr
                di = dz.imag - ci
                mag2 = dr * dr + di * di
                inv = h / mag2
                wr[q] = dr * inv
                wi[q] = -di * inv
                ar[q] = 0.0
                ai[q] = 0.0
                base[q] = m * (logh - 0.5 * log(wr[q] * wr[q] + wi[q] * wi[q]))
            for k in range(p - 1, -1, -1):
                mr = mom_div[s, k].real
                mi = mom_div[s, k].imag
                for q in range(nq):
                    tr = ar[q] + mr
                    ti = ai[q] + mi
                    ar[q] = tr * wr[q] - ti * wi[q]
                    ai[q] = tr * wi[q] + ti * wr[q]
            for q in range(nq):
                out[t, q] += INV2PI * (base[q] - ar[q])
    return out
