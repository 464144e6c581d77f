"""Aneurysm case: pulsatile inflow, cavity volume change and fluxes over one period.

    python scripts/aneurysm.py --levels 2 --solver fs --out out/aneurysm
Writes qoi.csv (t, q1, q2, Q1, Q2, cavity_change) and optionally VTK files.
"""
import argparse
import logging

from fsisolve.bench import run_benchmark
from fsisolve.config import RunConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, default=2)
    ap.add_argument("--tstep", type=int, default=32)
    ap.add_argument("--solver", default="fs")
    ap.add_argument("--out", default="out/aneurysm")
    ap.add_argument("--vtk", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = RunConfig(case="aneurysm", levels=args.levels, t_step=args.tstep, solvers=args.solver,
                    out=args.out, write_vtk=args.vtk).validate()
    results, summary = run_benchmark(cfg)
    q = results[args.solver].qoi
    print(f"{summary['dofs']} dofs; N={summary['solvers'][args.solver].get('N', float('nan')):.2f}")
    print(f"max cavity volume change {max(abs(c) for c in q.cavity):.3e}")
    print(f"flux defect max|Q1-Q2|/max|Q1| = {q.conservation_defect():.3e}")


if __name__ == "__main__":
    main()
