"""Compare the numba kernels with the pure numpy fallback.

Each backend runs in its own interpreter because ``PDSOPT_DISABLE_NUMBA`` is
read at import time. Usage::

    python benchmarks/bench_kernels.py [--grid 21] [--repeat 5]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat: int) -> float:
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def worker(n: int, repeat: int) -> dict:
    from pdsopt import _accel
    from pdsopt.devmap import DevObjectiveConfig, objective_and_point_gradient
    from pdsopt.fem import assemble_and_solve, model_from_grid
    from pdsopt.grid import CASE1, BaseSurfaceSpec, build_base_surface, classify_points, layout_nodes

    g = classify_points(build_base_surface(BaseSurfaceSpec(nu=n, nv=n, h=2.0, jitter=0.015, seed=0)), CASE1)
    cfg = DevObjectiveConfig()
    model = model_from_grid(g, layout_nodes(CASE1.supports, n, n))
    return {
        "numba": _accel.USE_NUMBA,
        "gauss_map": _best(lambda: objective_and_point_gradient(g, cfg), repeat),
        "fem": _best(lambda: assemble_and_solve(model), repeat),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", type=int, default=21, help="points per side")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.worker:
        print(json.dumps(worker(args.grid, args.repeat)))
        return 0
    rows = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, PDSOPT_DISABLE_NUMBA=flag)
        cmd = [sys.executable, __file__, "--worker", "--grid", str(args.grid), "--repeat", str(args.repeat)]
        out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        rows[label] = json.loads(out.stdout.strip().splitlines()[-1])
    print(f"grid {args.grid}x{args.grid}, best of {args.repeat}")
    print(f"{'kernel':<12}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for k in ("gauss_map", "fem"):
        a, b = rows["numba"][k], rows["numpy"][k]
        print(f"{k:<12}{1e3 * a:>12.2f}{1e3 * b:>12.2f}{b / a:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
