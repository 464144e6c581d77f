"""Solver statistics and flow quantities of interest.

Aggregates over one period:
    N   = mean linear iterations per Newton step
    rho = mean of r_N / r_0 per linear solve
    s   = mean Newton iterations per time step
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .assembly import StepStats, boundary_quadrature
from .mesh import Mesh, element_jacobians, element_volumes
from .reference import reference_element


@dataclass
class SolverReport:
    solver: str
    steps: list = field(default_factory=list)      # StepStats, one per (sub)step
    dofs: int = 0
    seconds: float = 0.0

    def rows(self):
        out = []
        for st in self.steps:
            for s, lin in enumerate(st.linear, start=1):
                rho = lin.rN / lin.r0 if lin.r0 > 0 else 0.0
                out.append({"solver": self.solver, "step": st.step, "t": st.t, "dt": st.dt,
                            "newton": s, "iterations": lin.iterations, "r0": lin.r0,
                            "rN": lin.rN, "rho": rho, "converged": int(lin.converged),
                            "seconds": lin.seconds})
        return out

    def write_csv(self, path):
        rows = self.rows()
        keys = ["solver", "step", "t", "dt", "newton", "iterations", "r0", "rN", "rho",
                "converged", "seconds"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)


@dataclass
class Aggregates:
    s_max: float
    N: float
    rho: float
    n_steps: int
    n_solves: int


def aggregate_metrics(steps) -> Aggregates:
    """Period averages from a list of StepStats (or a SolverReport)."""
    if isinstance(steps, SolverReport):
        steps = steps.steps
    steps = list(steps)
    if not steps:
        raise ValueError("no time steps logged")
    iters, rhos = [], []
    for st in steps:
        for lin in st.linear:
            iters.append(lin.iterations)
            rhos.append(lin.rN / lin.r0 if lin.r0 > 0 else 0.0)
    s_max = float(np.mean([st.newton_iterations for st in steps]))
    if not iters:
        return Aggregates(s_max, 0.0, 0.0, len(steps), 0)
    return Aggregates(s_max, float(np.mean(iters)), float(np.mean(rhos)), len(steps), len(iters))


def estimate_alpha(T1, dofs1, T2, dofs2):
    """Exponent of T ~ dofs^alpha from two runs."""
    if min(T1, T2) <= 0 or min(dofs1, dofs2) <= 0:
        raise ValueError("times and dof counts must be positive")
    if dofs1 == dofs2:
        raise ValueError("dof counts must differ")
    return math.log(T1 / T2) / math.log(dofs1 / dofs2)


def boundary_flux(mesh: Mesh, u, group, d=None):
    """Line integral of u.n over a boundary group on the geometry x + d.

    The normal is outward except on groups whose role is "inlet", where it
    points into the domain so that inflow counts positive.
    """
    faces = mesh.group_faces(group)
    if len(faces) == 0:
        raise ValueError(f"boundary group {group!r} is empty")
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    coords = mesh.nodes if d is None else mesh.nodes + np.asarray(d).reshape(-1, 2)
    q = 0.0
    for e, Nv, nds in boundary_quadrature(mesh, faces, coords):
        uq = Nv @ u[mesh.elements[e]]
        q += float(np.sum(uq * nds))
    return -q if mesh.roles.get(group) == "inlet" else q


def cumulative_flux(q, dt):
    """Trapezoidal running integral with Q(0) = 0."""
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        return q.copy()
    return cumulative_trapezoid(q, dx=dt, initial=0.0)


def cavity_volume_change(mesh: Mesh, d, cavity, V0=None):
    """(V(t) - V(0)) / V(0) of an element set, V from deformed element areas."""
    cavity = np.asarray(cavity, dtype=np.int64)
    if cavity.size == 0:
        raise ValueError("cavity element set is empty")
    if V0 is None:
        V0 = element_volumes(mesh, elements=cavity).sum()
    coords = mesh.nodes + np.asarray(d).reshape(-1, 2)
    V = element_volumes(mesh, elements=cavity, coords=coords).sum()
    return (V - V0) / V0


def solid_volume_defect(mesh: Mesh, d, elements=None):
    """|J(d) - 1| on solid elements: (element mean, max over Gauss points).

    The element mean is the volume-weighted average of J - 1, i.e.
    (V(d) - V0) / V0; the pointwise maximum is also returned because the
    discrete constraint only tests against piecewise linear pressures.
    """
    elements = np.nonzero(mesh.is_solid())[0] if elements is None else np.asarray(elements)
    w = reference_element(3).weights
    J0 = element_jacobians(mesh, elements=elements)
    J1 = element_jacobians(mesh, elements=elements, coords=mesh.nodes + np.asarray(d).reshape(-1, 2))
    mean = np.abs((J1 - J0) @ w) / (J0 @ w)
    return mean, np.abs(J1 / J0 - 1).max(axis=1)


@dataclass
class QoISeries:
    t: list = field(default_factory=list)
    q1: list = field(default_factory=list)
    q2: list = field(default_factory=list)
    cavity: list = field(default_factory=list)

    def append(self, t, q1, q2, cavity=float("nan")):
        self.t.append(float(t))
        self.q1.append(float(q1))
        self.q2.append(float(q2))
        self.cavity.append(float(cavity))

    def cumulative(self):
        """Q1, Q2 on the recorded (uniform) time grid."""
        t = np.asarray(self.t)
        dt = t[1] - t[0] if t.size > 1 else 0.0
        return cumulative_flux(self.q1, dt), cumulative_flux(self.q2, dt)

    def conservation_defect(self):
        """max |Q1 - Q2| / max |Q1| over the record."""
        Q1, Q2 = self.cumulative()
        scale = np.abs(Q1).max()
        return float(np.abs(Q1 - Q2).max() / scale) if scale > 0 else 0.0

    def write_csv(self, path):
        Q1, Q2 = self.cumulative()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "q1", "q2", "Q1", "Q2", "cavity_change"])
            for row in zip(self.t, self.q1, self.q2, Q1, Q2, self.cavity):
                w.writerow([f"{v:.12e}" for v in row])


def step_stats_summary(st: StepStats):
    return {"step": st.step, "t": st.t, "newton": st.newton_iterations,
            "converged": st.converged, "linear": [lin.iterations for lin in st.linear]}
