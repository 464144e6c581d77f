"""Solver statistics against refinement level, plus the time-vs-dofs exponent.

Runs the first few steps of the channel on each level and prints N, rho,
Newton iterations and alpha between consecutive levels.

    python scripts/mesh_study.py --levels 2 3 4 --steps 4 --solvers as,fs
"""
import argparse

import numpy as np

from fsisolve.bench import run_case, setup_case
from fsisolve.config import RunConfig
from fsisolve.metrics import aggregate_metrics, estimate_alpha


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--steps", type=int, default=4)
    ap.add_argument("--solvers", default="as,fs")
    ap.add_argument("--case", default="channel")
    args = ap.parse_args()

    rows = []
    for L in args.levels:
        cfg = RunConfig(case=args.case, levels=L, n_steps=args.steps, solvers=args.solvers)
        setup = setup_case(cfg)
        for kind in cfg.solver_list:
            res = run_case(setup, kind, keep_states=False)
            if res.failure:
                print(f"level {L} {kind}: failed ({res.failure})")
                continue
            agg = aggregate_metrics(res.report)
            rows.append((kind, L, setup.problem.n_dofs, agg.N, agg.rho, agg.s_max, res.report.seconds))
            print(f"level {L} {kind}: dofs={setup.problem.n_dofs} N={agg.N:.2f} rho={agg.rho:.2e} "
                  f"s={agg.s_max:.2f} T={res.report.seconds:.1f}s", flush=True)

    print(f"\n{'solver':6s} {'lvl':>3s} {'dofs':>7s} {'N':>6s} {'rho':>9s} {'s':>5s} {'T[s]':>7s} {'alpha':>6s}")
    for kind in dict.fromkeys(r[0] for r in rows):
        prev = None
        for r in (r for r in rows if r[0] == kind):
            alpha = estimate_alpha(prev[6], prev[2], r[6], r[2]) if prev else np.nan
            print(f"{kind:6s} {r[1]:3d} {r[2]:7d} {r[3]:6.2f} {r[4]:9.2e} {r[5]:5.2f} {r[6]:7.1f} {alpha:6.3f}")
            prev = r


if __name__ == "__main__":
    main()
