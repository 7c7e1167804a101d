"""Compiled vs pure-Python assembly kernels, and their share of a full solve.

    python benchmarks/bench_kernels.py [--levels 4 5 6] [--repeat 20]

The end-to-end timings run each backend in a fresh interpreter because the
backend is chosen once, at import.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from mlmc_ocp import fem
from mlmc_ocp._kernels import _pykernels
from mlmc_ocp.mesh import MeshHierarchy
from mlmc_ocp.ocp import QUAD5_POINTS, QUAD5_WEIGHTS

try:
    from mlmc_ocp._kernels import _ckernels
except ImportError:
    _ckernels = None

_SOLVE = """
import json, sys, time
from mlmc_ocp import BACKEND
from mlmc_ocp.mesh import MeshHierarchy
from mlmc_ocp.ocp import OCPConfig, solve_pathwise
from mlmc_ocp.randfield import draw_sample
level, n = int(sys.argv[1]), int(sys.argv[2])
mesh = MeshHierarchy.build(level)[level]
cfg = OCPConfig(u_a=-0.5, u_b=0.5)
solve_pathwise(mesh, draw_sample(0, 0), cfg)
t0 = time.perf_counter()
for i in range(n):
    solve_pathwise(mesh, draw_sample(0, i + 1), cfg)
print(json.dumps({"backend": BACKEND, "seconds": (time.perf_counter() - t0) / n}))
"""


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(levels, repeat):
    rng = np.random.default_rng(0)
    H = MeshHierarchy.build(max(levels))
    rows = []
    for l in levels:
        V = fem.space(H[l])
        pat = V.interior
        vals = rng.standard_normal(pat.scatter.shape)
        pe = np.ascontiguousarray(rng.uniform(-0.02, 0.02, (H[l].n_triangles, 3)))
        args = (pe, V.area, QUAD5_POINTS, QUAD5_WEIGHTS, 1e-2, -0.5, 0.5)
        for name, mod in (("python", _pykernels), ("cython", _ckernels)):
            if mod is None:
                continue
            data = np.zeros(pat.nnz)
            t_scatter = best(lambda: mod.scatter_add(data, pat.scatter, vals), repeat)
            t_clamp = best(lambda: mod.clamped_control_terms(*args), repeat)
            rows.append((l, H[l].n_triangles, name, t_scatter, t_clamp))
    return rows


def solve_rows(levels, n):
    rows = []
    for l in levels:
        for pure in ("0", "1"):
            env = dict(os.environ, MLMC_OCP_PURE_PYTHON=pure)
            out = subprocess.run(
                [sys.executable, "-c", _SOLVE, str(l), str(n)],
                env=env, capture_output=True, text=True, check=True,
            )
            r = json.loads(out.stdout)
            rows.append((l, r["backend"], r["seconds"]))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, nargs="+", default=[4, 5, 6])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--solves", type=int, default=5)
    args = ap.parse_args(argv)

    if _ckernels is None:
        print("compiled kernels not built; timing the fallback only")
    print(f"{'level':>5} {'elements':>9} {'backend':>7} {'scatter_add':>12} {'clamp_terms':>12}")
    for l, ne, name, ts, tc in kernel_rows(args.levels, args.repeat):
        print(f"{l:>5} {ne:>9} {name:>7} {ts * 1e3:>10.3f}ms {tc * 1e3:>10.3f}ms")
    print()
    print(f"{'level':>5} {'backend':>7} {'solve (box)':>12}")
    for l, name, t in solve_rows(args.levels, args.solves):
        print(f"{l:>5} {name:>7} {t * 1e3:>10.1f}ms")


if __name__ == "__main__":
    main()
