#!/usr/bin/env python3
"""Compare the exact solver against exhaustive grid search on random instances.

Reports optimality gaps, runtime of both methods, and how often the LP vertex
was fractional (so that branching was needed to reach the grid optimum).
"""

import argparse
import random
import statistics
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from flowdirector.lp import _lp_relaxation, brute_force, solve  # noqa: E402
from support import random_problem  # noqa: E402


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("-n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--granularity", type=int, default=5)
    p.add_argument("--lower", choices=["fair", "zero", "any"], default="any")
    args = p.parse_args()

    rng = random.Random(args.seed)
    gaps, t_solve, t_grid, fractional = [], [], [], 0
    for _ in range(args.n):
        prob = random_problem(rng, g=args.granularity, lower=args.lower)
        t0 = time.perf_counter()
        sol = solve(prob)
        t1 = time.perf_counter()
        ref = brute_force(prob, args.granularity)
        t2 = time.perf_counter()
        t_solve.append(t1 - t0)
        t_grid.append(t2 - t1)
        gaps.append(ref.objective - sol.objective)
        slack = [r // prob.granularity for r in prob.residual()]
        root = _lp_relaxation(prob, slack, [0] * prob.n_edges, [None] * prob.n_edges)
        fractional += any(v.denominator != 1 for v in root)

    print(f"instances          {args.n}")
    print(f"solver behind grid {sum(g > 0 for g in gaps)}")
    print(f"solver ahead       {sum(g < 0 for g in gaps)}")
    print(f"fractional roots   {fractional}")
    print(f"solve  median/max  {statistics.median(t_solve) * 1e3:.2f} / {max(t_solve) * 1e3:.2f} ms")
    print(f"grid   median/max  {statistics.median(t_grid) * 1e3:.2f} / {max(t_grid) * 1e3:.2f} ms")
    return 0 if not any(gaps) else 1


if __name__ == "__main__":
    sys.exit(main())
