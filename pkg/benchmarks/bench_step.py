"""Benchmark the compiled stepping kernel against the pure-Python fallback.

Usage: python3 benchmarks/bench_step.py [--steps 2000] [--cells 512] [--imex]
"""

import argparse
import time

import numpy as np

from glheat._kernels import fallback
from glheat.grid import InitialDatum, RadialGrid
from glheat.scheme import SchemeParams
from glheat.solver import radial_stencils

try:
    from glheat._kernels import _core
except ImportError:
    _core = None


def time_backend(impl, steps, grid, params, scheme_id):
    datum = InitialDatum.equator().build(grid)
    st_g, st_z = radial_stencils(grid)
    g, z = datum.g.copy(), datum.zeta.copy()
    accum = np.zeros(4)
    args = (params.log_lam, params.chi_coeffs(), params.chi_knots[0][0],
            params.chi_knots[1][0], *st_g, *st_z, grid.quad_weights, 1e-12, accum)
    impl.advance(g, z, 0, min(50, steps), 1e-5, scheme_id, *args)  # warmup
    g, z = datum.g.copy(), datum.zeta.copy()
    accum[:] = 0.0
    t0 = time.perf_counter()
    rc = impl.advance(g, z, 0, steps, 1e-5, scheme_id, *args)
    elapsed = time.perf_counter() - t0
    assert rc == -1
    return elapsed, g


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--cells", type=int, default=512)
    ap.add_argument("--imex", action="store_true")
    args = ap.parse_args()

    grid = RadialGrid(args.cells, 3)
    params = SchemeParams(1e4, args.steps * 1e-5, 3)
    scheme_id = 1 if args.imex else 0
    name = "imex" if args.imex else "strang"
    print(f"benchmark: {args.steps} {name} steps on n={args.cells} (equator datum, lambda=1e4)")

    t_py, g_py = time_backend(fallback, args.steps, grid, params, scheme_id)
    print(f"  python fallback : {t_py:8.3f}s  ({args.steps / t_py:9.0f} steps/s)")
    if _core is None:
        print("  compiled kernel : not built")
        return
    t_c, g_c = time_backend(_core, args.steps, grid, params, scheme_id)
    print(f"  compiled kernel : {t_c:8.3f}s  ({args.steps / t_c:9.0f} steps/s)")
    print(f"  speedup         : {t_py / t_c:.1f}x")
    print(f"  backend agreement: max |dg| = {np.max(np.abs(g_py - g_c)):.2e}")


if __name__ == "__main__":
    main()
