#!/usr/bin/env python3
"""Compare the compiled kernels against the numpy/pure-Python fallback.

Run after an editable install:

    python benchmarks/bench_kernels.py [--points N] [--orbits N] [--steps N]

The two backends implement identical semantics; this script reports wall
times for batch expression evaluation (grid/sampling workloads) and orbit
iteration (basin workloads), plus the result agreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from stabcert import mapdef
from stabcert._kernels import pyvm

try:
    from stabcert._kernels import _native
except ImportError:
    _native = None


def timed(fn, *args, repeat=3, **kwargs):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=1_000_000)
    ap.add_argument("--orbits", type=int, default=200)
    ap.add_argument("--steps", type=int, default=100_000)
    args = ap.parse_args()

    if _native is None:
        print("compiled backend not built; showing the fallback only")

    nm = mapdef.prepare(mapdef.get_map("decdec-exp1", {"b": 1.5}))
    prog = nm.program
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.05, 5.0, size=(args.points, nm.k))

    print(f"map: {nm.base.name}, program length {len(prog)}, "
          f"{prog.n_regs} registers")
    print(f"\nbatch evaluation, {args.points} points:")
    t_py, v_py = timed(pyvm.eval_batch, prog, pts)
    print(f"  python   {t_py * 1e3:9.1f} ms")
    if _native is not None:
        t_c, v_c = timed(_native.eval_batch, prog, pts)
        err = float(np.abs(v_c - v_py).max())
        print(f"  compiled {t_c * 1e3:9.1f} ms   (x{t_py / t_c:.1f}, "
              f"max |diff| = {err:.2e})")

    # a stiff orbit workload: unstable map runs to the step cap
    hot = mapdef.prepare(mapdef.get_map("ricker-delay", {"b": 2.0}))
    hist = rng.uniform(0.2, 2.0, size=(args.orbits, 2))
    print(f"\norbit batch, {args.orbits} orbits x up to {args.steps} steps:")
    t_py, o_py = timed(
        pyvm.orbit_batch, hot.program, hist, 0, 1.0, args.steps, 1e-8, 50,
        1e6, 0.0, float("inf"), repeat=1,
    )
    print(f"  python   {t_py * 1e3:9.1f} ms")
    if _native is not None:
        t_c, o_c = timed(
            _native.orbit_batch, hot.program, hist, 0, 1.0, args.steps, 1e-8,
            50, 1e6, 0.0, float("inf"), repeat=1,
        )
        same = bool((o_py[0] == o_c[0]).all())
        print(f"  compiled {t_c * 1e3:9.1f} ms   (x{t_py / t_c:.1f}, "
              f"outcomes agree: {same})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
