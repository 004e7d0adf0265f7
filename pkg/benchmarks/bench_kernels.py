"""Compiled kernels against the pure-Python fallback.

Times ILU(0) factorization, ILU(0) triangular solves and skew-convection
assembly on the cavity velocity matrix, and checks the two backends agree.

    python3 benchmarks/bench_kernels.py [--n 32] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from aceflow import fem, kernels, linsolve
from aceflow.mesh import build_structured_mesh


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32, help="cells per side")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    fe = fem.build_fe_system(build_structured_mesh(args.n), "cavity")
    ops = fem.assemble_static_operators(fe)
    A = linsolve.as_csr(ops.M_u * 1e3 + 0.71 * ops.K_u + 100.0 * ops.GD)
    b = np.random.default_rng(0).standard_normal(A.shape[0])
    w = np.random.default_rng(1).standard_normal(fe.n_u)
    names = ["python"] + (["compiled"] if kernels._compiled is not None else [])
    print(f"mesh {args.n}x{args.n}: {A.shape[0]} velocity dofs, {A.nnz} nonzeros; backends: {', '.join(names)}")

    results = {}
    for name in names:
        pc = linsolve.ILU0Preconditioner(A, backend=name)
        results[name] = {
            "ilu0 factor": best(lambda: linsolve.ILU0Preconditioner(A, backend=name), args.repeat),
            "ilu0 solve": best(lambda: pc.solve(b), args.repeat),
            "convection": best(lambda: fem.convection_data(fe, w, backend=name), args.repeat),
        }
    if "compiled" in results:
        x_c = linsolve.ILU0Preconditioner(A, backend="compiled").solve(b)
        x_p = linsolve.ILU0Preconditioner(A, backend="python").solve(b)
        n_c = fem.convection_data(fe, w, backend="compiled")
        n_p = fem.convection_data(fe, w, backend="python")
        print(f"max difference: ilu0 solve {np.abs(x_c - x_p).max():.1e}, convection {np.abs(n_c - n_p).max():.1e}")

    print(f"{'kernel':<14}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for kernel in results["python"]:
        row = [results[n][kernel] for n in names]
        line = f"{kernel:<14}" + "".join(f"{t * 1e3:>10.2f}ms" for t in row)
        if len(row) == 2:
            line += f"{row[0] / row[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
