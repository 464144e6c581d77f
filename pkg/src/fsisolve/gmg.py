"""Geometric multigrid over the mesh hierarchy, used as a GMRES preconditioner.

Prolongation is the natural injection of the nested Q2 / P1 spaces. The
restriction is its transpose with one change: coarse kinematic rows (solid
displacement rows in the natural numbering) receive nothing from fine
mesh-motion rows. In the J1/J2 block grids this moves the transpose of
P(d^f, d^s) to the (S, F) position and leaves out the transpose of
P(u^f, u^s).

Level operators are reassembled on every level from the injected state.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import (FSIProblem, LinearStats, SolveContext, apply_dirichlet, build_problem,
                       constraints, jacobian, stabilization_lambdas)
from .linalg import DirectSolver, KrylovConfig, gmres
from .mesh import _CHILDREN, MeshHierarchy
from .ordering import (OrderingPlan, build_fieldsplit_blocks, build_ordering, build_vanka_blocks)
from .preconditioners import ASPreconditioner, FSPreconditioner, SchwarzSweep
from .reference import gauss_1d, q2_shape


@dataclass
class CycleConfig:
    cycle: str = "v"
    pre: int = 1
    post: int = 1
    omega: float = 0.7

    def __post_init__(self):
        self.cycle = self.cycle.lower()
        if self.cycle not in ("v", "f", "w"):
            raise ValueError(f"unknown cycle {self.cycle!r}")
        if self.pre < 0 or self.post < 0 or self.pre + self.post == 0:
            raise ValueError("smoothing counts must be >= 0 and not both zero")


# --------------------------------------------------------------------------
# transfers


def node_prolongation(hier: MeshHierarchy, l: int) -> sp.csr_matrix:
    """Scalar Q2 interpolation from level l-1 nodes to level l nodes."""
    coarse = hier.levels[l - 1]
    host = hier.node_host[l - 1]
    e = host[:, 0].astype(np.int64)
    W = q2_shape(host[:, 1], host[:, 2])                    # (n_fine, 9)
    W[np.abs(W) < 1e-14] = 0.0
    rows = np.repeat(np.arange(host.shape[0]), 9)
    cols = coarse.elements[e].ravel()
    P = sp.csr_matrix((W.ravel(), (rows, cols)), shape=(host.shape[0], coarse.n_nodes))
    P.eliminate_zeros()
    return P


def pressure_prolongation(n_coarse_elements: int) -> sp.csr_matrix:
    """Exact embedding of modal P1 from a coarse element into its four children."""
    rows, cols, vals = [], [], []
    for e in range(n_coarse_elements):
        for c, (cx, cy) in enumerate(_CHILDREN):
            k = 4 * e + c
            s, t = 2 * cx - 1, 2 * cy - 1
            entries = [(0, 0, 1.0), (0, 1, 0.5 * s), (0, 2, 0.5 * t), (1, 1, 0.5), (2, 2, 0.5)]
            for i, j, v in entries:
                rows.append(3 * k + i)
                cols.append(3 * e + j)
                vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(12 * n_coarse_elements, 3 * n_coarse_elements))


def _pressure_projection():
    """(3, 12) L2 projection in reference coordinates of four child P1 fields onto parent P1."""
    s, w = gauss_1d(2)
    out = np.zeros((3, 12))
    for c, (cx, cy) in enumerate(_CHILDREN):
        for xi_c, wx in zip(s, w):
            for eta_c, wy in zip(s, w):
                xp = 0.5 * (xi_c + 2 * cx - 1)
                yp = 0.5 * (eta_c + 2 * cy - 1)
                phi_p = np.array([1.0, xp, yp])
                phi_c = np.array([1.0, xi_c, eta_c])
                out[:, 3 * c:3 * c + 3] += 0.25 * wx * wy * np.outer(phi_p, phi_c)
    return out / np.array([4.0, 4.0 / 3.0, 4.0 / 3.0])[:, None]


PRESSURE_PROJECTION = _pressure_projection()


def prolongation_natural(hier: MeshHierarchy, l: int) -> sp.csr_matrix:
    """Coarse (level l-1) -> fine (level l) map in the natural numbering of both levels."""
    Pn = node_prolongation(hier, l)
    P2 = sp.kron(Pn, sp.eye(2))
    Pp = pressure_prolongation(hier.levels[l - 1].n_elements)
    return sp.csr_matrix(sp.block_diag([P2, P2, Pp]))


def restriction_natural(P_nat, layout_c, layout_f) -> sp.csr_matrix:
    """P^T without the entries from fine mesh-motion rows into coarse kinematic rows."""
    R = sp.csr_matrix(P_nat.T)
    R = sp.coo_matrix(R)
    n_c, n_f = R.shape
    coarse_k = np.zeros(n_c, dtype=bool)
    coarse_k[layout_c["ds"]] = True
    fine_a = np.zeros(n_f, dtype=bool)
    fine_a[layout_f["df"]] = True
    keep = ~(coarse_k[R.row] & fine_a[R.col])
    return sp.csr_matrix((R.data[keep], (R.row[keep], R.col[keep])), shape=R.shape)


@dataclass
class TransferPair:
    P: sp.csr_matrix          # ordered: fine unknowns x coarse unknowns
    R: sp.csr_matrix          # ordered: coarse equations x fine equations
    P_nat: sp.csr_matrix
    R_nat: sp.csr_matrix


def build_transfer(hier: MeshHierarchy, l, layout_c, layout_f, plan_c: OrderingPlan,
                   plan_f: OrderingPlan) -> TransferPair:
    if hier.levels[l].n_elements != 4 * hier.levels[l - 1].n_elements:
        raise ValueError("levels are not related by one midpoint refinement")
    P_nat = prolongation_natural(hier, l)
    R_nat = restriction_natural(P_nat, layout_c, layout_f)
    P = sp.csr_matrix(P_nat[plan_f.col_perm][:, plan_c.col_perm])
    R = sp.csr_matrix(R_nat[plan_c.row_perm][:, plan_f.row_perm])
    return TransferPair(P, R, P_nat, R_nat)


def block(M, rows, cols):
    return sp.csr_matrix(M[rows[0]:rows[1], cols[0]:cols[1]])


def audit_transfer(tp: TransferPair, plan_c: OrderingPlan, plan_f: OrderingPlan):
    """Compare R with P^T block by block on the ordering's 6x6 grid.

    Returns a dict with the (1-based) grid positions where R differs from
    P^T, and for each differing position what R holds there.
    """
    PT = sp.csr_matrix(tp.P.T)
    rb = list(plan_c.row_blocks.values())
    cb_f = list(plan_f.row_blocks.values())
    fields_c = list(plan_c.col_blocks.values())
    fields_f = list(plan_f.col_blocks.values())
    differ = {}
    for i in range(6):
        for j in range(6):
            Rb = block(tp.R, rb[i], cb_f[j])
            Pb = block(PT, fields_c[i], fields_f[j])
            if Rb.shape != Pb.shape or abs(Rb - Pb).sum() > 0:
                differ[(i + 1, j + 1)] = Rb
    return differ


# --------------------------------------------------------------------------
# state restriction


def restrict_state(hier: MeshHierarchy, l: int, x_fine):
    """Level l natural vector -> level l-1: injection for d, u, projection for p."""
    fine, coarse = hier.levels[l], hier.levels[l - 1]
    nf, nc = fine.n_nodes, coarse.n_nodes
    d = x_fine[:2 * nf].reshape(nf, 2)[:nc]
    u = x_fine[2 * nf:4 * nf].reshape(nf, 2)[:nc]
    p = x_fine[4 * nf:].reshape(coarse.n_elements, 12)
    pc = p @ PRESSURE_PROJECTION.T
    return np.concatenate([d.ravel(), u.ravel(), pc.ravel()])


def coarse_stiffness(hier: MeshHierarchy, k_finest):
    """Per-level mesh stiffness: average of the finest-level values over descendants."""
    L = len(hier.levels) - 1
    out = []
    for l in range(L + 1):
        anc = hier.descendants(l, L)
        sums = np.bincount(anc, weights=k_finest, minlength=hier.levels[l].n_elements)
        cnt = np.bincount(anc, minlength=hier.levels[l].n_elements)
        out.append(sums / cnt)
    return out


def level_problems(hier: MeshHierarchy, params, bcs, k_finest=None, **kw):
    finest = build_problem(hier.finest, params, bcs, k_finest, **kw)
    ks = coarse_stiffness(hier, finest.k_mesh)
    probs = [build_problem(m, params, bcs, ks[l], **kw) for l, m in enumerate(hier.levels[:-1])]
    return probs + [finest]


# --------------------------------------------------------------------------
# cycles


@dataclass
class Level:
    A: sp.csr_matrix
    smoother: object = None             # callable z = M r
    P: sp.csr_matrix = None             # from level below
    R: sp.csr_matrix = None             # to level below
    coarse: DirectSolver = None


def _smooth(L: Level, x, b, omega, n):
    for _ in range(n):
        x = x + omega * L.smoother(b - L.A @ x)
    return x


def mg_cycle(levels, cfg: CycleConfig, b, x0=None, l=None, kind=None):
    l = len(levels) - 1 if l is None else l
    kind = cfg.cycle if kind is None else kind
    L = levels[l]
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if l == 0:
        return x + L.coarse(b - L.A @ x)
    x = _smooth(L, x, b, cfg.omega, cfg.pre)
    rc = L.R @ (b - L.A @ x)
    if kind == "v":
        ec = mg_cycle(levels, cfg, rc, None, l - 1, "v")
    elif kind == "w":
        ec = mg_cycle(levels, cfg, rc, None, l - 1, "w")
        ec = mg_cycle(levels, cfg, rc, ec, l - 1, "w")
    else:
        ec = mg_cycle(levels, cfg, rc, None, l - 1, "f")
        ec = mg_cycle(levels, cfg, rc, ec, l - 1, "v")
    x = x + L.P @ ec
    return _smooth(L, x, b, cfg.omega, cfg.post)


class GMGPreconditioner:
    """One cycle from a zero initial guess; a fixed linear operator once levels are set."""

    def __init__(self, levels, cfg: CycleConfig):
        self.levels = levels
        self.cfg = cfg

    def __call__(self, r):
        if len(self.levels) == 1:
            return self.levels[0].coarse(r)
        return mg_cycle(self.levels, self.cfg, np.asarray(r, dtype=float))


def gmg_precond_apply(pre: GMGPreconditioner, r):
    return pre(r)


# --------------------------------------------------------------------------
# linear solvers for the Newton loop


class DirectLinearSolver:
    """Sparse LU plus a few rounds of iterative refinement with the same factors.

    The FSI Jacobian mixes rows of very different scale (solid pressure stress
    against density-weighted kinematic rows), so a single LU solve can leave a
    residual several times above roundoff. Refinement stops as soon as it no
    longer reduces the residual.
    """
    name = "direct"

    def __init__(self, refine=3):
        self.refine = refine

    def __call__(self, J, b, ctx=None):
        t0 = time.perf_counter()
        lu = DirectSolver(J)
        x = lu(b)
        r = b - J @ x
        rN = float(np.linalg.norm(r))
        for _ in range(self.refine):
            x_new = x + lu(r)
            r_new = b - J @ x_new
            n_new = float(np.linalg.norm(r_new))
            if not n_new < rN:
                break
            x, r, rN = x_new, r_new, n_new
        return x, LinearStats(1, float(np.linalg.norm(b)), rN, True, time.perf_counter() - t0)


@dataclass
class MultigridSolver:
    """GMRES + GMG with AS (J1) or FS (J2) level smoothers."""
    hier: MeshHierarchy
    problems: list
    smoother: str = "as"
    cycle: CycleConfig = field(default_factory=CycleConfig)
    krylov: KrylovConfig = field(default_factory=KrylovConfig)
    elems_per_block: int = 4
    overlap: int = 1
    ordering: str = None

    def __post_init__(self):
        if self.smoother not in ("as", "fs"):
            raise ValueError(f"unknown smoother {self.smoother!r}")
        expected = "j1" if self.smoother == "as" else "j2"
        self.ordering = self.ordering or expected
        if self.ordering != expected:
            raise ValueError(f"smoother {self.smoother} runs on ordering {expected}, not {self.ordering}")
        self.name = self.smoother
        self.plans = [build_ordering(p.layout, self.ordering) for p in self.problems]
        if self.smoother == "as":
            self.blocks = [build_vanka_blocks(p.mesh, p.layout, plan, self.elems_per_block)
                           for p, plan in zip(self.problems, self.plans)]
        else:
            self.blocks = [build_fieldsplit_blocks(p.mesh, p.layout, plan, self.elems_per_block, self.overlap)
                           for p, plan in zip(self.problems, self.plans)]
        self.transfers = [None] + [
            build_transfer(self.hier, l, self.problems[l - 1].layout, self.problems[l].layout,
                           self.plans[l - 1], self.plans[l])
            for l in range(1, len(self.problems))]
        self._masked = {}
        self._lam_cache = {}
        self.last_levels = None

    def _masked_transfer(self, l, cons_c, cons_f):
        if l not in self._masked:
            tp, pc, pf = self.transfers[l], self.plans[l - 1], self.plans[l]
            P = tp.P
            keep_fu = np.ones(P.shape[0]); keep_fu[pf.col_positions(cons_f.cols)] = 0.0
            keep_cu = np.ones(P.shape[1]); keep_cu[pc.col_positions(cons_c.cols)] = 0.0
            keep_ce = np.ones(tp.R.shape[0]); keep_ce[pc.row_positions(cons_c.rows)] = 0.0
            keep_fe = np.ones(tp.R.shape[1]); keep_fe[pf.row_positions(cons_f.rows)] = 0.0
            Pm = sp.csr_matrix(sp.diags(keep_fu) @ P @ sp.diags(keep_cu))
            Rm = sp.csr_matrix(sp.diags(keep_ce) @ tp.R @ sp.diags(keep_fe))
            Pm.eliminate_zeros()
            Rm.eliminate_zeros()
            self._masked[l] = (Pm, Rm)
        return self._masked[l]

    def _smoother(self, l, A):
        if self.smoother == "as":
            return ASPreconditioner(A, self.blocks[l])
        return FSPreconditioner(A, self.blocks[l])

    def level_matrices(self, J, ctx: SolveContext):
        """Natural Dirichlet-modified Jacobians and constraints on every level, fine to coarse."""
        nlev = len(self.problems)
        mats = [None] * nlev
        cons = [None] * nlev
        mats[-1], cons[-1] = J, ctx.cons
        x, x_old = ctx.x, ctx.x_old
        for l in range(nlev - 1, 0, -1):
            x = restrict_state(self.hier, l, x)
            x_old = restrict_state(self.hier, l, x_old)
            prob: FSIProblem = self.problems[l - 1]
            key = (l - 1, ctx.t_new, ctx.dt)
            if key not in self._lam_cache:
                self._lam_cache = {k: v for k, v in self._lam_cache.items() if k[1:] == key[1:]}
                self._lam_cache[key] = stabilization_lambdas(prob, x_old)
            lam = self._lam_cache[key]
            c = constraints(prob, ctx.t_new, ctx.dt, x_old)
            Jc, Rc = jacobian(prob, x, x_old, ctx.dt, ctx.t_new, lam)
            mats[l - 1], _ = apply_dirichlet(Jc, Rc, c, x)
            cons[l - 1] = c
        return mats, cons

    def build_levels(self, J, ctx: SolveContext):
        mats, cons = self.level_matrices(J, ctx)
        levels = []
        for l, (M, plan) in enumerate(zip(mats, self.plans)):
            A = plan.matrix(M)
            lev = Level(A)
            if l == 0:
                lev.coarse = DirectSolver(A, label="coarse level")
            else:
                lev.smoother = self._smoother(l, A)
                lev.P, lev.R = self._masked_transfer(l, cons[l - 1], cons[l])
            levels.append(lev)
        return levels

    def __call__(self, J, b, ctx: SolveContext):
        t0 = time.perf_counter()
        levels = self.build_levels(J, ctx)
        self.last_levels = levels
        plan = self.plans[-1]
        M = GMGPreconditioner(levels, self.cycle)
        res = gmres(levels[-1].A, M, plan.rhs(b), self.krylov)
        x = plan.solution(res.x)
        return x, LinearStats(res.iterations, float(res.history[0]), float(res.residual),
                              res.converged, time.perf_counter() - t0)


def make_linear_solver(kind, hier=None, problems=None, **kw):
    if kind == "direct":
        return DirectLinearSolver()
    return MultigridSolver(hier, problems, kind, **kw)


# --------------------------------------------------------------------------
# scalar sanity problem: Q2 Poisson on the all-fluid square


def poisson_levels(hier: MeshHierarchy, smoother_patch=1, omega=1.0):
    """Levels for -lap u = f with homogeneous Dirichlet data on every boundary group."""
    from .fem import scalar_matrices
    levels = []
    for l, mesh in enumerate(hier.levels):
        K, _ = scalar_matrices(mesh)
        bnd = np.unique(np.concatenate([mesh.group_nodes(g) for g in mesh.groups]))
        keep = np.ones(mesh.n_nodes)
        keep[bnd] = 0.0
        A = sp.csr_matrix(sp.diags(keep) @ K @ sp.diags(keep) + sp.diags(1.0 - keep))
        lev = Level(A)
        if l == 0:
            lev.coarse = DirectSolver(A)
        else:
            patches = [np.unique(mesh.elements[i:i + smoother_patch])
                       for i in range(0, mesh.n_elements, smoother_patch)]
            lev.smoother = SchwarzSweep(A, patches, "multiplicative")
            Pn = node_prolongation(hier, l)
            coarse_bnd = np.zeros(hier.levels[l - 1].n_nodes)
            coarse_bnd[np.unique(np.concatenate([hier.levels[l - 1].group_nodes(g)
                                                 for g in mesh.groups]))] = 1.0
            lev.P = sp.csr_matrix(sp.diags(keep) @ Pn @ sp.diags(1.0 - coarse_bnd))
            lev.R = sp.csr_matrix(lev.P.T)
        levels.append(lev)
    return levels


def contraction_factors(levels, cfg: CycleConfig, n_cycles=10, seed=0):
    """Error reduction per cycle for A x = 0 from a random start."""
    rng = np.random.default_rng(seed)
    A = levels[-1].A
    b = np.zeros(A.shape[0])
    x = rng.standard_normal(A.shape[0])
    norms = [np.linalg.norm(x)]
    for _ in range(n_cycles):
        x = mg_cycle(levels, cfg, b, x)
        norms.append(np.linalg.norm(x))
    norms = np.array(norms)
    return norms[1:] / norms[:-1]


__all__ = ["CycleConfig", "TransferPair", "build_transfer", "audit_transfer", "mg_cycle",
           "GMGPreconditioner", "MultigridSolver", "DirectLinearSolver", "restrict_state",
           "level_problems", "poisson_levels", "contraction_factors"]
