# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: term-table polynomial evaluation and Gauss-Seidel sweeps."""

import numpy as np

NAME = "compiled"


def eval_edges(double[::1] term_coeffs, int[::1] term_offsets,
               int[::1] factor_offsets, int[::1] factor_var,
               int[::1] factor_exp, double[::1] xx):
    cdef Py_ssize_t ne = term_offsets.shape[0] - 1
    out_arr = np.empty(ne, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t e, t, f, r
    cdef double acc, prod, v
    for e in range(ne):
        acc = 0.0
        for t in range(term_offsets[e], term_offsets[e + 1]):
            prod = term_coeffs[t]
            for f in range(factor_offsets[t], factor_offsets[t + 1]):
                v = xx[factor_var[f]]
                for r in range(factor_exp[f]):
                    prod *= v
            acc += prod
        out[e] = acc
    return out_arr


def solve_linear(int[::1] indptr, int[::1] indices, double[::1] data,
                 double[::1] c, double[::1] x, double tol, long max_iter):
    """In-place Gauss-Seidel on x = A x + c; self-loop mass is folded into
    the update denominator. Returns (sweeps, last max update)."""
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t i, j
    cdef long it
    cdef double acc, diag, old, new, delta
    if n == 0:
        return 0, 0.0
    delta = 0.0
    for it in range(max_iter):
        delta = 0.0
        for i in range(n):
            acc = c[i]
            diag = 0.0
            for j in range(indptr[i], indptr[i + 1]):
                if indices[j] == i:
                    diag += data[j]
                else:
                    acc += data[j] * x[indices[j]]
            if diag >= 1.0:
                new = acc
            else:
                new = acc / (1.0 - diag)
            old = x[i]
            if new - old > delta:
                delta = new - old
            elif old - new > delta:
                delta = old - new
            x[i] = new
        if delta <= tol:
            return it + 1, delta
    return max_iter, delta
