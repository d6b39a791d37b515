"""Pure NumPy implementations of the compiled kernels.

Same contracts as _core.pyx; the linear solver does Jacobi sweeps (the whole
sweep is one vector expression) instead of Gauss-Seidel, which needs more
sweeps but no per-element Python loop.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def eval_edges(term_coeffs, term_offsets, factor_offsets, factor_var,
               factor_exp, xx):
    if len(term_coeffs) == 0:
        return np.zeros(len(term_offsets) - 1, dtype=np.float64)
    fv = xx[factor_var] ** factor_exp
    prods = np.multiply.reduceat(fv, factor_offsets[:-1]) * term_coeffs
    return np.add.reduceat(prods, term_offsets[:-1])


def solve_linear(indptr, indices, data, c, x, tol, max_iter):
    n = len(c)
    if n == 0:
        return 0, 0.0
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    data = np.asarray(data, dtype=np.float64)
    rows = np.repeat(np.arange(n, dtype=indices.dtype), np.diff(indptr))
    on_diag = indices == rows
    diag = np.bincount(rows[on_diag], weights=data[on_diag], minlength=n)
    # self-loop mass is folded into the update denominator
    degenerate = diag >= 1.0
    denom = np.where(degenerate, 1.0, 1.0 - diag)
    orow = rows[~on_diag]
    ocol = indices[~on_diag]
    odata = data[~on_diag]
    delta = 0.0
    for it in range(int(max_iter)):
        y = c + np.bincount(orow, weights=odata * x[ocol], minlength=n)
        y = np.where(degenerate, y, y / denom)
        delta = float(np.max(np.abs(y - x)))
        x[:] = y
        if delta <= tol:
            return it + 1, delta
    return int(max_iter), delta
