"""Compare the numba and pure numpy/scipy kernel paths on a sphere stiffness matrix.

Times stiffness assembly (scatter-add), IC(0) factorization and one
preconditioner application (forward plus backward triangular solve), checks
that both paths agree, and prints one line per kernel.

    python3 benchmarks/bench_kernels.py --level 2 --repeat 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from surfdmk import kernels
from surfdmk.fem import assemble_stiffness, gradient_cache
from surfdmk.solver import lower_triangle
from surfdmk.sphere import exact_tdens_at, sphere_problem


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--level", type=int, default=2)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.NUMBA is None:
        raise SystemExit("numba is not installed; nothing to compare")

    problem = sphere_problem(args.level)
    pair = problem.pair
    cache = gradient_cache(pair)
    # a contrasted conductivity, like a density late in a run
    mu = exact_tdens_at(pair.coarse.barycenters) + 1e-3
    values = (mu[pair.parent][:, None] * cache.local_stiffness.reshape(len(pair.parent), -1)).ravel()
    A = assemble_stiffness(pair, mu)
    L = lower_triangle(A)
    indptr, indices = L.indptr.astype(np.int64), L.indices.astype(np.int64)
    data = L.data.astype(np.float64)
    data[indptr[1:] - 1] *= 1.0 + 1e-8
    rhs = problem.b

    print(f"level {args.level}: n = {A.shape[0]}, nnz(L) = {len(data)}, best of {args.repeat}")
    results = {}
    for ks in (kernels.NUMBA, kernels.NUMPY):
        # first call compiles the numba kernels
        ks.scatter_add(cache.slots, values, len(cache.indices))
        factor, _ = ks.ic0(indptr, indices, data)
        ks.backward(indptr, indices, factor, ks.forward(indptr, indices, factor, rhs))
        row = {}
        row["scatter_add"] = best_of(lambda: ks.scatter_add(cache.slots, values, len(cache.indices)), args.repeat)
        row["ic0"] = best_of(lambda: ks.ic0(indptr, indices, data), args.repeat)
        row["precond_apply"] = best_of(
            lambda: ks.backward(indptr, indices, factor, ks.forward(indptr, indices, factor, rhs)), args.repeat
        )
        results[ks.name] = row

    print(f"{'kernel':<14} {'numba [ms]':>12} {'numpy [ms]':>12} {'speedup':>9} {'max diff':>10}")
    for name in ("scatter_add", "ic0", "precond_apply"):
        t_jit, out_jit = results["numba"][name]
        t_np, out_np = results["numpy"][name]
        a = out_jit[0] if name == "ic0" else out_jit
        b = out_np[0] if name == "ic0" else out_np
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
        print(f"{name:<14} {1e3 * t_jit:12.3f} {1e3 * t_np:12.3f} {t_np / t_jit:9.1f} {diff:10.1e}")


if __name__ == "__main__":
    main()
