"""Run the flexible-wall channel for one period with several solvers and print a table.

    python scripts/run_channel.py --levels 3 --solvers direct,as,fs --out out/channel
"""
import argparse
import logging

from fsisolve.bench import run_benchmark
from fsisolve.config import parse_text


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--case", default="channel")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--tstep", type=int, default=32)
    ap.add_argument("--steps", type=int, default=0)
    ap.add_argument("--solvers", default="direct,as,fs")
    ap.add_argument("--out", default="out/channel")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = parse_text(f"case = {args.case}\nlevels = {args.levels}\nt_step = {args.tstep}\n"
                     f"n_steps = {args.steps}\nsolvers = {args.solvers}\nout = {args.out}\n")
    _, summary = run_benchmark(cfg)

    print(f"\n{summary['case']}: {summary['dofs']} dofs, {summary['steps']} steps of dt={summary['dt']:.5f}")
    print(f"{'solver':8s} {'N':>7s} {'rho':>9s} {'s':>5s} {'flux':>9s} {'time[s]':>8s}")
    for k, e in summary["solvers"].items():
        if "N" not in e:
            print(f"{k:8s} failed: {e['failure']}")
            continue
        print(f"{k:8s} {e['N']:7.2f} {e['rho']:9.2e} {e['s_max']:5.2f} "
              f"{e.get('flux_defect', float('nan')):9.2e} {e['seconds']:8.1f}")
    for pair, d in summary.get("final_state_difference", {}).items():
        print(f"final state {pair}: max relative difference {d['max']:.2e}")


if __name__ == "__main__":
    main()
