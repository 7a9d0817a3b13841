"""Compare the compiled allocation kernel with the pure-Python fallback.

Both backends run the same policy on the same observation buffer; the script
checks that they make identical allocations and reports wall time per run.

    python3 benchmarks/bench_kernels.py --budget 3000 --repeat 3
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from topm.policies import ALL_POLICIES, run_policy
from topm.policies.backend import get_kernel
from topm.problems import make_experiment


def time_run(inst, policy, n0, T, backend, repeat):
    best = float("inf")
    trace = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        trace = run_policy(inst, policy, n0, T, seed=7, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--experiment", default="e3")
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--budget", type=int, default=3000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--policies", default=",".join(ALL_POLICIES))
    args = ap.parse_args(argv)

    try:
        get_kernel("compiled")
    except ImportError:
        raise SystemExit("compiled kernel is not built; run `pip install -e . --no-build-isolation`")

    spec = make_experiment(args.experiment).with_params(m=args.m)
    inst = spec.instance(seed=7, macro=0)
    print(f"{spec.name}: k={spec.k} m={args.m} n0={spec.n0} T={args.budget}")
    print(f"{'policy':<10}{'compiled_s':>12}{'python_s':>12}{'speedup':>10}  same")
    for policy in args.policies.split(","):
        tc, a = time_run(inst, policy, spec.n0, args.budget, "compiled", args.repeat)
        tp, b = time_run(inst, policy, spec.n0, args.budget, "python", args.repeat)
        same = np.array_equal(a.allocations, b.allocations)
        print(f"{policy:<10}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}  {same}")


if __name__ == "__main__":
    main()
