"""Compare the two SUPG test-function weights on the first steps of a case.

"unit" uses tau (u - w).grad(phi); "density" multiplies that by rho_f.
Prints Newton/linear statistics and the outlet flux at the last step.

    python scripts/supg_weight.py --case channel --levels 2 --steps 8
"""
import argparse

import numpy as np

from fsisolve.bench import run_case, setup_case
from fsisolve.config import RunConfig
from fsisolve.metrics import aggregate_metrics


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--case", default="channel")
    ap.add_argument("--levels", type=int, default=2)
    ap.add_argument("--steps", type=int, default=8)
    ap.add_argument("--solver", default="as")
    args = ap.parse_args()

    finals = {}
    for weight in ("unit", "density"):
        cfg = RunConfig(case=args.case, levels=args.levels, n_steps=args.steps, solvers=args.solver,
                        supg_weight=weight)
        setup = setup_case(cfg)
        res = run_case(setup, args.solver, keep_states=False)
        if res.failure:
            print(f"{weight:8s} failed after {len(res.qoi.t) - 1} steps: {res.failure}")
            continue
        agg = aggregate_metrics(res.report)
        finals[weight] = res.final
        print(f"{weight:8s} N={agg.N:6.2f} rho={agg.rho:.2e} s={agg.s_max:.2f} "
              f"q_out(T)={res.qoi.q2[-1]: .4e} max|u|={np.abs(res.final).max():.3e}")
    if len(finals) == 2:
        lay = setup.problem.layout
        u = lay["uf"]
        a, b = finals["unit"][u], finals["density"][u]
        print(f"fluid velocity difference: {np.abs(a - b).max() / np.abs(a).max():.2e} (relative max)")


if __name__ == "__main__":
    main()
