"""Compare the compiled and pure-numpy LP kernels on the same workload.

Runs the bounded-variable simplex on a batch of random LPs and on the
root relaxations of the bundled scenarios, once with numba compilation
and once with ``METROPLAN_PURE_NUMPY=1``.  Each configuration runs in a
fresh subprocess so the import-time kernel selection is honored.

Usage::

    python3 benchmarks/bench_lp.py [--repeat N] [--size M]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _random_lp(rng, m, n):
    """Random feasible problem in the solver's equality form A x = b."""
    import numpy as np

    G = rng.normal(size=(m, n))
    x_feas = rng.uniform(0.0, 1.0, size=n)
    slack = rng.uniform(0.1, 1.0, size=m)
    b = G @ x_feas + slack
    A = np.hstack([G, np.eye(m)])
    c = np.concatenate([rng.normal(size=n), np.zeros(m)])
    lb = np.zeros(n + m)
    span = float(np.abs(b).sum()) + n + m
    ub = np.concatenate([np.full(n, 2.0), np.full(m, span)])
    return A, b, c, lb, ub


def run_workload(repeat: int, size: int) -> dict:
    import numpy as np

    from metroplan.bnb import compile_model
    from metroplan.demand import freeze_network_demand
    from metroplan.formulation import build_line_model
    from metroplan.io import load_bundled_scenario
    from metroplan.simplex import NUMBA_ENABLED, solve_lp

    rng = np.random.default_rng(7)
    problems = [_random_lp(rng, size, 2 * size) for _ in range(repeat)]

    _, scen = load_bundled_scenario("4l2t_st")
    lps = []
    for ln in scen.lines[:2]:
        frozen = freeze_network_demand(scen, {})[ln.id]
        comp = compile_model(build_line_model(ln, frozen, scen.globals))
        lps.append(comp)

    # warm-up triggers jit compilation so it is not measured
    A, b, c, lb, ub = problems[0]
    solve_lp(A, b, c, lb, ub)

    t0 = time.perf_counter()
    iters = 0
    for A, b, c, lb, ub in problems:
        res = solve_lp(A, b, c, lb, ub)
        iters += res.iterations
    random_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    for comp in lps:
        res = solve_lp(comp.A, comp.b, comp.c, comp.lb, comp.ub)
        iters += res.iterations
    root_s = time.perf_counter() - t0

    return {"numba": NUMBA_ENABLED, "random_lps_s": round(random_s, 4),
            "root_relaxations_s": round(root_s, 4),
            "simplex_iterations": int(iters)}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=40,
                    help="number of random LPs (default 40)")
    ap.add_argument("--size", type=int, default=60,
                    help="rows per random LP, columns are twice that")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        print(json.dumps(run_workload(args.repeat, args.size)))
        return 0

    results = {}
    for label, flag in (("numba", "0"), ("pure-numpy", "1")):
        env = dict(os.environ, METROPLAN_PURE_NUMPY=flag)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--repeat", str(args.repeat), "--size", str(args.size)],
            env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(out.stdout.strip().splitlines()[-1])

    print(f"{'configuration':>14} {'kernel':>8} {'random LPs':>12} "
          f"{'root LPs':>10} {'iterations':>11}")
    for label, r in results.items():
        kernel = "numba" if r["numba"] else "numpy"
        print(f"{label:>14} {kernel:>8} {r['random_lps_s']:>11.3f}s "
              f"{r['root_relaxations_s']:>9.3f}s "
              f"{r['simplex_iterations']:>11}")
    num, base = (results["numba"], results["pure-numpy"])
    if num["numba"]:
        total_n = num["random_lps_s"] + num["root_relaxations_s"]
        total_p = base["random_lps_s"] + base["root_relaxations_s"]
        if total_n > 0:
            print(f"\nspeedup from compilation: {total_p / total_n:.1f}x")
    else:
        print("\nnumba unavailable; both runs used the numpy kernel")
    return 0


if __name__ == "__main__":
    sys.exit(main())
