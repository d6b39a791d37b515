"""Compare the compiled kernel core against the pure NumPy fallback.

Runs both backends on identical inputs and prints wall times plus the
speedup. The two entry points are benchmarked separately:

  eval_edges    polynomial batch evaluation (the per-particle hot path)
  solve_linear  iterative x = A x + c sweeps (large-chain reachability)

Usage: python3 benchmarks/bench_kernels.py [--quick]
"""

import argparse
import random
import statistics
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fscsynth._kernels import TermTable, _fallback  # noqa: E402
from fscsynth.polynomials import Polynomial  # noqa: E402

try:
    from fscsynth._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    return statistics.median(best)


def _random_table(rng, num_polys, names):
    polys = []
    for _ in range(num_polys):
        terms = {}
        for _ in range(rng.randint(1, 4)):
            mono = tuple(sorted(
                (rng.choice(names), rng.randint(1, 2))
                for _ in range(rng.randint(0, 2))))
            terms[mono] = terms.get(mono, Fraction(0)) + Fraction(
                rng.randint(-9, 9), rng.randint(1, 9))
        polys.append(Polynomial(terms))
    pidx = {n: i for i, n in enumerate(names)}
    return TermTable(polys, pidx)


def _random_system(rng, n, nnz_per_row=3):
    indptr = [0]
    indices = []
    data = []
    for i in range(n):
        cols = rng.sample(range(n), nnz_per_row)
        row = {j: rng.uniform(0.05, 0.85 / nnz_per_row) for j in cols}
        for j in sorted(row):
            indices.append(j)
            data.append(row[j])
        indptr.append(len(indices))
    c = np.array([rng.uniform(0.0, 1.0) for _ in range(n)])
    return (np.asarray(indptr, dtype=np.intc),
            np.asarray(indices, dtype=np.intc),
            np.asarray(data, dtype=np.float64), c)


def bench_eval_edges(rng, sizes, calls, repeats):
    names = ["p%d" % i for i in range(8)]
    rows = []
    for num_polys in sizes:
        table = _random_table(rng, num_polys, names)
        xs = [np.append(np.array([rng.uniform(0.05, 0.95)
                                  for _ in names]), 1.0)
              for _ in range(calls)]
        args = (table.term_coeffs, table.term_offsets, table.factor_offsets,
                table.factor_var, table.factor_exp)

        def run(backend):
            for xx in xs:
                backend.eval_edges(*args, xx)

        t_py = _time(lambda: run(_fallback), repeats)
        t_c = _time(lambda: run(_core), repeats) if _core else None
        rows.append(("eval_edges %5d polys x %d calls" % (num_polys, calls),
                     t_py, t_c))
        ref = _fallback.eval_edges(*args, xs[0])
        if _core is not None:
            assert np.allclose(ref, _core.eval_edges(*args, xs[0]), atol=1e-12)
    return rows


def bench_solve_linear(rng, sizes, repeats):
    rows = []
    for n in sizes:
        indptr, indices, data, c = _random_system(rng, n)

        def run(backend):
            x = np.zeros(n)
            sweeps, delta = backend.solve_linear(indptr, indices, data,
                                                 c.copy(), x, 1e-12, 100000)
            assert delta <= 1e-12, "did not converge"
            return x

        t_py = _time(lambda: run(_fallback), repeats)
        t_c = _time(lambda: run(_core), repeats) if _core else None
        rows.append(("solve_linear n=%5d" % n, t_py, t_c))
        if _core is not None:
            assert np.allclose(run(_fallback), run(_core), atol=1e-9)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true",
                    help="smaller sizes and fewer repeats")
    args = ap.parse_args()

    rng = random.Random(0)
    repeats = 3 if args.quick else 7
    calls = 200 if args.quick else 1000
    poly_sizes = (200, 2000) if args.quick else (200, 2000, 20000)
    sys_sizes = (200, 2000) if args.quick else (200, 2000, 20000)

    if _core is None:
        print("compiled core not importable; timing the fallback only")
    rows = bench_eval_edges(rng, poly_sizes, calls, repeats)
    rows += bench_solve_linear(rng, sys_sizes, repeats)

    width = max(len(r[0]) for r in rows)
    print("%-*s  %10s  %10s  %8s" % (width, "workload", "python", "compiled",
                                     "speedup"))
    for label, t_py, t_c in rows:
        if t_c is None:
            print("%-*s  %9.1fms  %10s  %8s" % (width, label, t_py * 1e3,
                                                "-", "-"))
        else:
            print("%-*s  %9.1fms  %8.1fms  %7.1fx" % (width, label, t_py * 1e3,
                                                      t_c * 1e3, t_py / t_c))


if __name__ == "__main__":
    main()
