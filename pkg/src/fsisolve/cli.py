"""``fsisolve run``: run a case with one or more linear solvers.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import CASES, parse_text
from .errors import ConfigError, SolverFailure

log = logging.getLogger("fsisolve")


def _parser():
    ap = argparse.ArgumentParser(prog="fsisolve")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a case and write report.csv, summary.json, qoi.csv")
    run.add_argument("--case", required=True,
                     help=f"config file (key = value lines) or a preset name {CASES}")
    run.add_argument("--smoother", help="as, fs, direct or a comma list, e.g. as,fs,direct")
    run.add_argument("--ordering", choices=["auto", "j", "j1", "j2"])
    run.add_argument("--levels", type=int)
    run.add_argument("--cycle", choices=["v", "f", "w"])
    run.add_argument("--pre", type=int)
    run.add_argument("--post", type=int)
    run.add_argument("--sweeps", type=int, help="sets both --pre and --post")
    run.add_argument("--omega", type=float)
    run.add_argument("--elems-per-block", type=int)
    run.add_argument("--tstep", type=int, help="time steps per period (dt = 1/tstep)")
    run.add_argument("--periods", type=float)
    run.add_argument("--steps", type=int, help="override the number of steps")
    run.add_argument("--out", help="output directory")
    run.add_argument("--vtk", action="store_true", help="write a VTK snapshot per step")
    run.add_argument("--mtx", action="store_true", help="dump the first Jacobian per solver")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="any other config key; may be repeated")
    run.add_argument("-q", "--quiet", action="store_true")
    return ap


def config_from_args(args):
    src = Path(args.case)
    if src.is_file():
        text = src.read_text()
    elif args.case in CASES:
        text = f"case = {args.case}\n"
    else:
        raise ConfigError(f"--case: no such file and not a preset: {args.case!r}")
    extra = []
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        extra.append(item)
    text = text + "\n" + "\n".join(extra) + "\n"
    pre = args.sweeps if args.pre is None else args.pre
    post = args.sweeps if args.post is None else args.post
    overrides = {"solvers": args.smoother, "ordering": args.ordering, "levels": args.levels,
                 "cycle": args.cycle, "pre": pre, "post": post, "omega": args.omega,
                 "elems_per_block": args.elems_per_block, "t_step": args.tstep,
                 "periods": args.periods, "n_steps": args.steps, "out": args.out,
                 "write_vtk": True if args.vtk else None, "write_mtx": True if args.mtx else None}
    return parse_text(text, overrides)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"fsisolve: config error: {exc}", file=sys.stderr)
        return 2
    from .bench import run_benchmark
    try:
        results, summary = run_benchmark(cfg, cfg.out)
    except ConfigError as exc:
        print(f"fsisolve: config error: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"fsisolve: solver failure: {exc}", file=sys.stderr)
        return 3
    if not args.quiet:
        print(json.dumps(summary, indent=2))
    failed = [k for k, r in results.items() if r.failure]
    if failed:
        for k in failed:
            print(f"fsisolve: {k}: {results[k].failure}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
