"""Case presets and the benchmark time loop.

Presets
  channel   flexible-wall straight channel driven by opposite normal-stress
            pulses at the two lumen ends, wall ends clamped
  aneurysm  the same channel with a bulge in the upper wall, pulsatile
            parabolic inflow at the inlet and a stress-free outlet
  duct      rigid lumen with a steady parabolic inflow (Poiseuille check)
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import (BoundaryCondition, NewtonConfig, advance, distance_stiffness,
                       inverse_volume_stiffness, rest_state)
from .config import RunConfig, write_manifest
from .constitutive import MaterialParams
from .errors import SolverFailure
from .gmg import CycleConfig, DirectLinearSolver, MultigridSolver, level_problems
from .linalg import KrylovConfig, write_mtx
from .mesh import GeometryCase, build_hierarchy, cavity_elements, write_vtk
from .metrics import SolverReport, QoISeries, aggregate_metrics, boundary_flux, cavity_volume_change

log = logging.getLogger(__name__)


def parabolic_inflow(y, R, umax=0.05):
    """Axial inflow -umax (1 - (y/R)^2); negative sign: the flow runs towards x = 0."""
    return -umax * (1.0 - (np.asarray(y) / R) ** 2)


def geometry_for(cfg: RunConfig) -> GeometryCase:
    if cfg.case == "duct":
        return GeometryCase("duct", "duct", cfg.length, cfg.lumen, cfg.wall, nx=cfg.nx,
                            ny_fluid=cfg.ny_fluid, ny_wall=cfg.ny_wall)
    bulge = cfg.bulge_radius if cfg.case == "aneurysm" else 0.0
    return GeometryCase(cfg.case, "channel", cfg.length, cfg.lumen, cfg.wall, bulge, cfg.bulge_center,
                        cfg.nx, cfg.ny_fluid, cfg.ny_wall)


def material_for(cfg: RunConfig) -> MaterialParams:
    return MaterialParams(rho_s=cfg.rho_s, rho_f=cfg.rho_f, mu=cfg.mu, E=cfg.E, nu=cfg.nu)


def boundary_conditions(cfg: RunConfig):
    R = 0.5 * cfg.lumen
    if cfg.case == "channel":
        amp = cfg.pressure_amplitude
        return [BoundaryCondition("inlet", "normal_stress", lambda t: amp * np.sin(2 * np.pi * t)),
                BoundaryCondition("outlet", "normal_stress", lambda t: -amp * np.sin(2 * np.pi * t)),
                BoundaryCondition("wall_inlet", "displacement"),
                BoundaryCondition("wall_outlet", "displacement")]
    umax, pulse = cfg.inflow_umax, cfg.inflow_pulse
    if cfg.case == "aneurysm":
        def inflow(x, t):
            ux = (1.0 + pulse * np.sin(2 * np.pi * t)) * parabolic_inflow(x[:, 1], R, umax)
            return np.stack([ux, np.zeros_like(ux)], -1)
        return [BoundaryCondition("inlet", "velocity", inflow),
                BoundaryCondition("inlet", "displacement"),
                BoundaryCondition("outlet", "zero_stress"),
                BoundaryCondition("outlet", "displacement"),
                BoundaryCondition("wall_inlet", "displacement"),
                BoundaryCondition("wall_outlet", "displacement")]

    def steady(x, t):
        ux = parabolic_inflow(x[:, 1], R, umax)
        return np.stack([ux, np.zeros_like(ux)], -1)
    return [BoundaryCondition("inlet", "velocity", steady),
            BoundaryCondition("inlet", "displacement"),
            BoundaryCondition("outlet", "normal_stress", lambda t: 0.0),
            BoundaryCondition("bottom", "velocity"), BoundaryCondition("bottom", "displacement"),
            BoundaryCondition("top", "velocity"), BoundaryCondition("top", "displacement")]


@dataclass
class CaseSetup:
    cfg: RunConfig
    geometry: GeometryCase
    hier: object
    problems: list
    bcs: list
    cavity: np.ndarray = None

    @property
    def problem(self):
        return self.problems[-1]


def setup_case(cfg: RunConfig) -> CaseSetup:
    geo = geometry_for(cfg)
    hier = build_hierarchy(geo, cfg.levels)
    bcs = boundary_conditions(cfg)
    fine = hier.finest
    k = None
    if cfg.mesh_stiffness == "distance":
        tip = np.array([geo.bulge_center if geo.bulge_center is not None else 0.5 * geo.length,
                        0.5 * geo.lumen])
        k = distance_stiffness(fine, tip, cfg.stiffness_a, cfg.stiffness_c)
    else:
        k = inverse_volume_stiffness(fine)
    probs = level_problems(hier, material_for(cfg), bcs, k, supg=cfg.supg, supg_weight=cfg.supg_weight)
    cav = cavity_elements(fine, geo) if cfg.case == "aneurysm" and geo.bulge_radius > 0 else None
    return CaseSetup(cfg, geo, hier, probs, bcs, cav)


def make_solver(setup: CaseSetup, kind: str):
    cfg = setup.cfg
    if kind == "direct":
        return DirectLinearSolver()
    return MultigridSolver(setup.hier, setup.problems, kind,
                           CycleConfig(cfg.cycle, cfg.pre, cfg.post, cfg.omega),
                           KrylovConfig(cfg.gmres_restart, cfg.gmres_max_iters, cfg.gmres_rtol, cfg.gmres_atol),
                           cfg.elems_per_block, cfg.overlap, cfg.ordering_for(kind))


class _MatrixDump:
    """Wraps a linear solver and writes the first Jacobian it receives."""

    def __init__(self, solver, path):
        self.solver, self.path, self.done = solver, path, False

    def __call__(self, J, b, ctx=None):
        if not self.done:
            write_mtx(self.path, J)
            self.done = True
        return self.solver(J, b, ctx)


def flux_groups(mesh):
    inlet = mesh.groups_with_role("inlet")
    outlet = mesh.groups_with_role("outlet")
    return (inlet[0] if inlet else None), (outlet[0] if outlet else None)


@dataclass
class RunResult:
    solver: str
    report: SolverReport
    qoi: QoISeries
    states: list = field(default_factory=list)     # state after every step
    failure: str = ""

    @property
    def final(self):
        return self.states[-1]


def run_case(setup: CaseSetup, kind: str, out: Path | None = None, keep_states=True) -> RunResult:
    cfg = setup.cfg
    prob = setup.problem
    mesh = prob.mesh
    solver = make_solver(setup, kind)
    if out is not None and cfg.write_mtx:
        solver = _MatrixDump(solver, out / f"jacobian_{kind}.mtx")
    newton = NewtonConfig(cfg.newton_rtol, cfg.newton_atol, cfg.newton_max)
    report = SolverReport(kind, dofs=prob.n_dofs)
    qoi = QoISeries()
    g_in, g_out = flux_groups(mesh)
    x = rest_state(prob)
    dt, t = cfg.dt, 0.0
    result = RunResult(kind, report, qoi)

    def record(t, x):
        d, u, _ = prob.dofmap.split(x)
        q1 = boundary_flux(mesh, u, g_in, d) if g_in else np.nan
        q2 = boundary_flux(mesh, u, g_out, d) if g_out else np.nan
        cav = cavity_volume_change(mesh, d, setup.cavity) if setup.cavity is not None else np.nan
        qoi.append(t, q1, q2, cav)

    record(t, x)
    t0 = time.perf_counter()
    for i in range(cfg.steps):
        try:
            x, stats = advance(prob, x, t, dt, solver, newton, step=i)
        except SolverFailure as exc:
            result.failure = str(exc)
            log.error("%s: step %d failed: %s", kind, i, exc)
            if out is not None:
                np.save(out / f"failed_state_{kind}.npy", x)
            break
        t = (i + 1) * dt
        report.steps.extend(stats)
        record(t, x)
        if keep_states:
            result.states.append(x.copy())
        else:
            result.states = [x.copy()]
        log.info("%s step %d t=%.4f newton=%s linear=%s", kind, i, t,
                 [s.newton_iterations for s in stats], [l.iterations for s in stats for l in s.linear])
        if out is not None and cfg.write_vtk:
            d, u, p = prob.dofmap.split(x)
            vdir = out / "vtk"
            vdir.mkdir(exist_ok=True)
            write_vtk(vdir / f"{kind}_{i:04d}.vtk", mesh,
                      {"displacement": d, "velocity": u}, {"pressure": p[:, 0]},
                      coords=mesh.nodes + d)
    report.seconds = time.perf_counter() - t0
    return result


def relative_difference(prob, x, y):
    """Per-field max|x - y| / max|x|, and the largest over fields."""
    out = {}
    for f in ("ds", "df", "us", "uf", "ps", "pf"):
        idx = prob.layout[f]
        if idx.size == 0:
            continue
        scale = np.abs(x[idx]).max()
        diff = np.abs(x[idx] - y[idx]).max()
        out[f] = float(diff / scale) if scale > 0 else float(diff)
    out["max"] = max(out.values())
    return out


def run_benchmark(cfg: RunConfig, out=None):
    """Run every selected solver; write report.csv, summary.json, qoi.csv under ``out``."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, out / "manifest.txt")
    setup = setup_case(cfg)
    results = {}
    for kind in cfg.solver_list:
        results[kind] = run_case(setup, kind, out, keep_states=len(cfg.solver_list) > 1)
    summary = {"case": cfg.case, "levels": cfg.levels, "dofs": setup.problem.n_dofs,
               "dt": cfg.dt, "steps": cfg.steps, "solvers": {}}
    rows = []
    for kind, res in results.items():
        rows += res.report.rows()
        entry = {"seconds": res.report.seconds, "failure": res.failure,
                 "completed_steps": len(res.qoi.t) - 1}
        if res.report.steps:
            agg = aggregate_metrics(res.report)
            entry.update({"N": agg.N, "rho": agg.rho, "s_max": agg.s_max})
        if len(res.qoi.t) > 1 and np.isfinite(res.qoi.q1).all():
            entry["flux_defect"] = res.qoi.conservation_defect()
        summary["solvers"][kind] = entry
        res.qoi.write_csv(out / (f"qoi_{kind}.csv" if len(results) > 1 else "qoi.csv"))
        if res.states:
            np.save(out / f"final_state_{kind}.npy", res.final)
    if rows:
        import csv
        with open(out / "report.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    kinds = list(results)
    if len(kinds) > 1:
        prob = setup.problem
        diffs = {}
        ref = kinds[0]
        with open(out / "state_difference.csv", "w") as fh:
            fh.write("step,pair,max_rel\n")
            for other in kinds[1:]:
                a, b = results[ref].states, results[other].states
                for i, (xa, xb) in enumerate(zip(a, b)):
                    fh.write(f"{i},{ref}-{other},{relative_difference(prob, xa, xb)['max']:.6e}\n")
                if a and b and len(a) == len(b):
                    diffs[f"{ref}-{other}"] = relative_difference(prob, a[-1], b[-1])
        summary["final_state_difference"] = diffs
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return results, summary
