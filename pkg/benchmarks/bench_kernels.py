"""Time the compiled and numpy relaxation kernels against each other.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Part one times single red-black sweeps and residual evaluations on a few
grid shapes. Part two runs a full 128^2 pressure solve in a fresh interpreter per
backend (the backend is fixed at import), selecting the fallback with
COMPOSEFLOW_KERNELS=python.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from composeflow import kernels
from composeflow.grid import PoissonProblem, harmonic_faces

SHAPES = [(64, 64, 1), (256, 256, 1), (48, 48, 48)]

SOLVE = """
import time, numpy as np
from composeflow.grid import DomainSpec, FieldRegistry, init_grid, solve_poisson
from composeflow import kernels
dom = DomainSpec(2, (0.0, 0.0), (1.0, 1.0), (4, 4), (32, 32), {"xl": "outflow_ins", "xr": "outflow_ins"})
grid = init_grid(dom, FieldRegistry())
rhs = np.random.default_rng(1).normal(size=(128, 128))
t = time.perf_counter()
res = solve_poisson(grid, None, rhs, tol=1e-8, method="METHOD", max_iters=ITERS)
print(kernels.BACKEND, time.perf_counter() - t, res.iterations)
"""


def problem(shape, rng):
    bcs = [("dirichlet", "neumann"), ("periodic", "periodic"), ("neumann", "neumann")]
    beta = rng.uniform(0.5, 2.0, shape)
    return PoissonProblem(shape, 1.0 / shape[0], bcs, harmonic_faces(beta, bcs))


def time_kernels(repeat: int):
    rng = np.random.default_rng(0)
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    print(f"{'shape':<14} {'kernel':<9} " + " ".join(f"{name:>12}" for name, _ in backends) + "   speedup")
    for shape in SHAPES:
        lev = problem(shape, rng).levels[0]
        f = rng.normal(size=lev.shape)
        p0 = lev.padded(rng.normal(size=lev.shape))
        out = np.empty(lev.shape)
        for kernel in ("rb_sweep", "residual"):
            times = []
            for _, be in backends:
                p = p0.copy()
                if kernel == "rb_sweep":
                    def run(be=be, p=p):
                        be.rb_sweep(p, lev.bx, lev.by, lev.bz, f, lev.h2, 1.5, 0)
                        be.rb_sweep(p, lev.bx, lev.by, lev.bz, f, lev.h2, 1.5, 1)
                else:
                    def run(be=be, p=p):
                        be.residual(p, lev.bx, lev.by, lev.bz, f, lev.h2, out)
                number = 5
                times.append(min(timeit.repeat(run, number=number, repeat=repeat)) / number)
            speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else "       -"
            cells = "x".join(str(s) for s in shape if s > 1)
            print(f"{cells:<14} {kernel:<9} " + " ".join(f"{1e3 * t:10.3f}ms" for t in times) + f"  {speed}")


def time_solves():
    print("\nfull 128^2 solve (fresh interpreter per backend)")
    for method, iters in (("sor", 20000), ("mgcg", 200)):
        for choice in ("python", ""):
            env = dict(os.environ, COMPOSEFLOW_KERNELS=choice)
            proc = subprocess.run([sys.executable, "-c", SOLVE.replace("METHOD", method).replace("ITERS", str(iters))],
                                  env=env, capture_output=True, text=True)
            if proc.returncode != 0:
                print(f"  {method:<5} failed: {proc.stderr.strip().splitlines()[-1]}")
                continue
            out = proc.stdout.split()
            print(f"  {method:<5} {out[0]:<7} {float(out[1]):8.3f} s  {out[2]} iterations")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-solves", action="store_true")
    args = ap.parse_args(argv)
    print(f"active backend: {kernels.BACKEND}\n")
    time_kernels(args.repeat)
    if not args.skip_solves:
        time_solves()


if __name__ == "__main__":
    main()
