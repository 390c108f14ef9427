"""Compare the numba kernels against their numpy fallbacks.

Two parts:

* pointwise kernels (g, dg, G and the mixed-norm inverse) timed in-process
  from the two kernel tables, after a warm-up call that absorbs compilation;
* a full ground-state solve on the gap-edge problem, run once in a child
  process with the JIT enabled and once with ``NLSGAP_DISABLE_JIT=1``.

Usage::

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R] [--no-solve]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from nlsgap import kernels

SOLVE_SNIPPET = """
import json, time
from nlsgap import JIT_ENABLED, NonlinearitySpec, PotentialSpec, build_problem, ground_state
t0 = time.perf_counter()
problem = build_problem(PotentialSpec("cosine", amplitude=1.0), NonlinearitySpec("logtype", 4, 4), cells={cells}, points_per_cell=16)
t1 = time.perf_counter()
ground_state(problem, 0)
t2 = time.perf_counter()
rep = ground_state(problem, 1)
t3 = time.perf_counter()
print(json.dumps(dict(jit=JIT_ENABLED, setup=t1 - t0, first=t2 - t1, second=t3 - t2, c_est=rep.c_est)))
"""


def time_kernels(size, repeat):
    rng = np.random.default_rng(0)
    u = 3.0 * rng.standard_normal(size)
    q = np.ones(size)
    cases = [
        ("g", lambda table: table["g"](kernels.LOGTYPE, 4.0, q, u)),
        ("dg", lambda table: table["dg"](kernels.LOGTYPE, 4.0, q, u)),
        ("G", lambda table: table["G"](kernels.LOGTYPE, 4.0, q, u)),
        ("sum_inverse", lambda table: table["sum_inverse"](u, 0.7, 4.0)),
    ]
    rows = []
    for name, call in cases:
        a = call(kernels.numba_kernels)
        b = call(kernels.numpy_kernels)
        err = float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))
        t_jit = min(timeit.repeat(lambda: call(kernels.numba_kernels), number=10, repeat=repeat)) / 10
        t_np = min(timeit.repeat(lambda: call(kernels.numpy_kernels), number=10, repeat=repeat)) / 10
        rows.append((name, t_jit, t_np, err))
    return rows


def time_solve(cells, disable):
    env = dict(os.environ)
    if disable:
        env["NLSGAP_DISABLE_JIT"] = "1"
    else:
        env.pop("NLSGAP_DISABLE_JIT", None)
    out = subprocess.run(
        [sys.executable, "-c", SOLVE_SNIPPET.format(cells=cells)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=200_000, help="samples per kernel call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--cells", type=int, default=20, help="cells in the solve benchmark")
    ap.add_argument("--no-solve", action="store_true", help="skip the end-to-end solve")
    args = ap.parse_args(argv)

    print(f"pointwise kernels, {args.size} samples, best of {args.repeat}")
    print(f"{'kernel':<12} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8} {'max rel diff':>13}")
    for name, t_jit, t_np, err in time_kernels(args.size, args.repeat):
        print(f"{name:<12} {1e3 * t_jit:10.3f} {1e3 * t_np:10.3f} {t_np / t_jit:8.2f} {err:13.1e}")

    if args.no_solve:
        return
    print(f"\nground state on {args.cells} cells (seconds; 'first' includes JIT compilation or cache load)")
    print(f"{'mode':<8} {'setup':>8} {'first':>8} {'second':>8} {'c_est':>16}")
    for disable in (False, True):
        r = time_solve(args.cells, disable)
        mode = "numba" if r["jit"] else "numpy"
        print(f"{mode:<8} {r['setup']:8.3f} {r['first']:8.3f} {r['second']:8.3f} {r['c_est']:16.10f}")


if __name__ == "__main__":
    main()
