"""Numeric kernels with a compiled core and a NumPy fallback.

Two entry points, identical contracts in both backends:

  eval_edges(...)   evaluate a batch of term-encoded polynomials at a float
                    parameter vector
  solve_linear(...) iterate x = A x + c in place until the largest update
                    drops below tol (returns sweeps used and last delta)

The compiled backend is built from _core.pyx at install time; if the build
was skipped or the import fails, the fallback is used silently. Setting
FSCSYNTH_PURE_PYTHON=1 forces the fallback (useful for benchmarking and
debugging). Results agree within iteration tolerance, not bit-for-bit: the
core uses Gauss-Seidel sweeps, the fallback vectorized Jacobi sweeps.
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("FSCSYNTH_PURE_PYTHON"):
    from . import _fallback as _backend
else:
    try:
        from . import _core as _backend  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as _backend

eval_edges = _backend.eval_edges
solve_linear = _backend.solve_linear
BACKEND = _backend.NAME


def backend_name() -> str:
    return BACKEND


class TermTable:
    """Flat encoding of polynomials for batched float evaluation.

    Every term gets at least one factor (constants point at a reserved slot
    holding 1.0) and every polynomial at least one term, so segment reduction
    never sees an empty segment in either backend.
    """

    def __init__(self, polys, param_index):
        self.num_params = len(param_index)
        coeffs = []
        term_offsets = [0]
        factor_offsets = [0]
        fvar = []
        fexp = []
        for poly in polys:
            items = poly.sorted_terms()
            if not items:
                items = [((), 0)]
            for mono, coeff in items:
                coeffs.append(float(coeff))
                if mono:
                    for name, e in mono:
                        fvar.append(param_index[name])
                        fexp.append(e)
                else:
                    fvar.append(self.num_params)
                    fexp.append(1)
                factor_offsets.append(len(fvar))
            term_offsets.append(len(coeffs))
        self.term_coeffs = np.asarray(coeffs, dtype=np.float64)
        self.term_offsets = np.asarray(term_offsets, dtype=np.intc)
        self.factor_offsets = np.asarray(factor_offsets, dtype=np.intc)
        self.factor_var = np.asarray(fvar, dtype=np.intc)
        self.factor_exp = np.asarray(fexp, dtype=np.intc)

    def __len__(self):
        return len(self.term_offsets) - 1

    def evaluate(self, x) -> np.ndarray:
        """x: float vector ordered by the param_index given at build time."""
        xx = np.empty(self.num_params + 1, dtype=np.float64)
        xx[: self.num_params] = x
        xx[self.num_params] = 1.0
        return eval_edges(self.term_coeffs, self.term_offsets,
                          self.factor_offsets, self.factor_var,
                          self.factor_exp, xx)
