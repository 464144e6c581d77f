"""Monolithic ALE residual, Jacobian, boundary conditions and Newton iteration.

Element residuals are written once in jax; the Jacobian is their forward-mode
derivative, so it contains every shape-derivative term of the moving fluid
geometry. Row meaning in the natural numbering (see ``fem``):

  displacement row, solid-owned node:  rho_s (u - (d - d_old)/dt, phi)        kinematics
  displacement row, fluid node:        (k (grad d + grad d^T), grad phi)     mesh motion
  velocity row:                        momentum, solid part on the reference
                                       configuration, fluid part on x + d
  solid pressure row:                  -(J - 1, q)
  fluid pressure row:                  -(div u, q) on x + d

Fluid mesh-motion test functions vanish on the interface, which is why fluid
element contributions to displacement rows of solid-owned nodes are masked.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ._jax import jax, jnp
from .constitutive import MaterialParams, mooney_rivlin_elastic_pk1, pressure_pk1
from .errors import ConfigError, ElementInversion, SolverFailure
from .fem import DofMap, FieldLayout, build_layout
from .mesh import Mesh, element_jacobians, element_volumes
from .reference import edge_rule, q2_grad, q2_shape, reference_element
from .supg import physical_derivatives, stabilization_state, tau_array

BC_KINDS = ("velocity", "displacement", "normal_stress", "zero_stress", "symmetry")


@dataclass
class TimeScheme:
    dt: float
    theta: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("time step must be positive")


@dataclass
class BoundaryCondition:
    """``value`` is f(x (n, 2), t) -> (n, 2) for velocity/displacement, g(t) for normal stress."""
    group: str
    kind: str
    value: Callable | None = None

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ConfigError(f"unknown boundary condition kind {self.kind!r}")


def zero_vector(x, t):
    return np.zeros_like(x)


# --------------------------------------------------------------------------
# element kernels

PRM = ("rho_s", "rho_f", "mu", "C1", "C2", "dt", "fsx", "fsy", "ffx", "ffy", "supg")

# Factor multiplying tau in the streamline test function. "unit" is the
# dimensionally consistent tau (u.grad)phi; "density" adds a factor rho_f
# (tau rho_f (u.grad)phi), which makes the stabilization dominate inertia by
# orders of magnitude at blood-flow parameters and stalls Newton.
SUPG_WEIGHTS = ("unit", "density")


def supg_factor(params: MaterialParams, supg=True, weight="unit"):
    if weight not in SUPG_WEIGHTS:
        raise ConfigError(f"unknown SUPG weight {weight!r}; expected one of {SUPG_WEIGHTS}")
    if not supg:
        return 0.0
    return params.rho_f if weight == "density" else 1.0


def _params_vector(params: MaterialParams, dt, body_s=(0.0, 0.0), body_f=(0.0, 0.0), supg=1.0):
    return jnp.array([params.rho_s, params.rho_f, params.mu, params.C1, params.C2, dt,
                      body_s[0], body_s[1], body_f[0], body_f[1], float(supg)])


def _inv_and_det(G):
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    inv = jnp.stack([jnp.stack([G[..., 1, 1], -G[..., 0, 1]], -1),
                     jnp.stack([-G[..., 1, 0], G[..., 0, 0]], -1)], -2) / det[..., None, None]
    return inv, det


def _unpack(z):
    return z[:18].reshape(9, 2), z[18:36].reshape(9, 2), z[36:39]


def make_kernels(order=3, frozen_geometry=False):
    ref = reference_element(order)
    N = jnp.asarray(ref.N)
    dN = jnp.asarray(ref.dN)
    d2N = jnp.asarray(ref.d2N)
    Np = jnp.asarray(ref.Np)
    wq = jnp.asarray(ref.weights)
    dNp = jnp.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def solid(z, X, d_old, u_old, p_old, prm):
        d, u, p = _unpack(z)
        rho, C1, C2, dt = prm[0], prm[3], prm[4], prm[5]
        fs = prm[6:8]
        G = jnp.einsum("ka,qkb->qab", X, dN)
        Ginv, det = _inv_and_det(G)
        w = det * wq
        gN = jnp.einsum("qkb,qba->qka", dN, Ginv)
        I = jnp.eye(2)
        Fn = I + jnp.einsum("ka,qkb->qab", d, gN)
        Fo = I + jnp.einsum("ka,qkb->qab", d_old, gN)
        # Crank-Nicolson on the whole solid stress; leaving the pressure part
        # implicit would give rigid rotations a negative stiffness of order C1/2
        P = 0.5 * (mooney_rivlin_elastic_pk1(Fn, C1, C2) + pressure_pk1(Fn, Np @ p)
                   + mooney_rivlin_elastic_pk1(Fo, C1, C2) + pressure_pk1(Fo, Np @ p_old))
        uq, uoq = N @ u, N @ u_old
        vel_kin = uq - N @ (d - d_old) / dt
        Rd = rho * jnp.einsum("qa,qk,q->ka", vel_kin, N, w)
        Ru = jnp.einsum("qa,qk,q->ka", rho * ((uq - uoq) / dt - fs), N, w) \
            + jnp.einsum("qab,qkb,q->ka", P, gN, w)
        Jn = Fn[:, 0, 0] * Fn[:, 1, 1] - Fn[:, 0, 1] * Fn[:, 1, 0]
        Rp = -jnp.einsum("q,qj,q->j", Jn - 1.0, Np, w)
        return jnp.concatenate([Rd.ravel(), Ru.ravel(), Rp])

    def fluid(z, X, d_old, u_old, lam, k, dmask, prm):
        d, u, p = _unpack(z)
        rho, mu, dt, on = prm[1], prm[2], prm[5], prm[10]
        ff = prm[8:10]
        nu = mu / rho
        dg = jax.lax.stop_gradient(d) if frozen_geometry else d
        # mesh motion on the reference configuration
        G0 = jnp.einsum("ka,qkb->qab", X, dN)
        G0inv, det0 = _inv_and_det(G0)
        gN0 = jnp.einsum("qkb,qba->qka", dN, G0inv)
        gd = jnp.einsum("ka,qkb->qab", d, gN0)
        Rd = k * jnp.einsum("qab,qkb,q->ka", gd + gd.swapaxes(1, 2), gN0, det0 * wq) * dmask[:, None]

        # new configuration
        gN, hN, det = physical_derivatives(X + dg, dN, d2N, xp=jnp)
        Gn = jnp.einsum("ka,qkb->qab", X + dg, dN)
        Gninv, _ = _inv_and_det(Gn)
        w = det * wq
        # old configuration
        Go = jnp.einsum("ka,qkb->qab", X + d_old, dN)
        Goinv, deto = _inv_and_det(Go)
        gNo = jnp.einsum("qkb,qba->qka", dN, Goinv)
        wo = deto * wq

        uq, uoq = N @ u, N @ u_old
        wmesh = N @ (d - d_old) / dt
        gu = jnp.einsum("ka,qkb->qab", u, gN)
        guo = jnp.einsum("ka,qkb->qab", u_old, gNo)
        conv = rho * jnp.einsum("qab,qb->qa", gu, uq - wmesh)
        convo = rho * jnp.einsum("qab,qb->qa", guo, uoq - wmesh)
        visc = mu * (gu + gu.swapaxes(1, 2))
        visco = mu * (guo + guo.swapaxes(1, 2))
        pq = Np @ p
        udot = rho * (uq - uoq) / dt

        Ru = jnp.einsum("qa,qk,q->ka", udot + 0.5 * conv - rho * ff, N, w) \
            + 0.5 * jnp.einsum("qab,qkb,q->ka", visc, gN, w) \
            - jnp.einsum("q,qka,q->ka", pq, gN, w) \
            + jnp.einsum("qa,qk,q->ka", 0.5 * convo, N, wo) \
            + 0.5 * jnp.einsum("qab,qkb,q->ka", visco, gNo, wo)

        # streamline-upwind term, new time level only
        lap = jnp.einsum("ka,qkbb->qa", u, hN)
        graddiv = jnp.einsum("kb,qkab->qa", u, hN)
        gp = jnp.einsum("j,ji,qia->qa", p, dNp, Gninv)
        strong = udot + conv + gp - mu * (lap + graddiv) - rho * ff
        tau = tau_array(uq, lam, nu, xp=jnp)
        stream = tau[:, None] * on * jnp.einsum("qb,qkb->qk", uq - wmesh, gN)
        Ru = Ru + jnp.einsum("qk,qa,q->ka", stream, strong, w)

        div = gu[:, 0, 0] + gu[:, 1, 1]
        Rp = -jnp.einsum("q,qj,q->j", div, Np, w)
        return jnp.concatenate([Rd.ravel(), Ru.ravel(), Rp])

    def with_aux(f):
        def g(*args):
            r = f(*args)
            return r, r
        return g

    solid_jac = jax.jit(jax.vmap(jax.jacfwd(with_aux(solid), has_aux=True),
                                 in_axes=(0, 0, 0, 0, 0, None)))
    fluid_jac = jax.jit(jax.vmap(jax.jacfwd(with_aux(fluid), has_aux=True),
                                 in_axes=(0, 0, 0, 0, 0, 0, 0, None)))
    solid_res = jax.jit(jax.vmap(solid, in_axes=(0, 0, 0, 0, 0, None)))
    fluid_res = jax.jit(jax.vmap(fluid, in_axes=(0, 0, 0, 0, 0, 0, 0, None)))
    return {"solid_jac": solid_jac, "fluid_jac": fluid_jac,
            "solid_res": solid_res, "fluid_res": fluid_res}


_KERNELS = {}


def kernels(order=3, frozen_geometry=False):
    key = (order, frozen_geometry)
    if key not in _KERNELS:
        _KERNELS[key] = make_kernels(order, frozen_geometry)
    return _KERNELS[key]


# --------------------------------------------------------------------------
# problem setup


@dataclass
class Constraints:
    rows: np.ndarray     # residual rows replaced by identity rows
    cols: np.ndarray     # unknown fixed by each replaced row
    values: np.ndarray   # target value of that unknown


@dataclass
class FSIProblem:
    mesh: Mesh
    dofmap: DofMap
    layout: FieldLayout
    params: MaterialParams
    bcs: list
    k_mesh: np.ndarray
    supg: bool = True
    supg_weight: str = "unit"
    order: int = 3
    frozen_geometry: bool = False
    body_s: tuple = (0.0, 0.0)
    body_f: tuple = (0.0, 0.0)
    solid_el: np.ndarray = field(default=None, repr=False)
    fluid_el: np.ndarray = field(default=None, repr=False)
    dmask: np.ndarray = field(default=None, repr=False)
    traction: dict = field(default_factory=dict, repr=False)
    _pattern: tuple = field(default=None, repr=False)
    _bc_plan: list = field(default=None, repr=False)

    @property
    def n_dofs(self):
        return self.dofmap.n_dofs


def inverse_volume_stiffness(mesh: Mesh):
    return 1.0 / element_volumes(mesh)


def distance_stiffness(mesh: Mesh, m, a=1.0, c=1.0e4, stiff_elements=None, a_stiff=100.0):
    """a / (1 + c |x_center - m|); elements in ``stiff_elements`` use ``a_stiff``."""
    from .constitutive import mesh_stiffness_distance
    centers = mesh.nodes[mesh.elements[:, 8]]
    k = mesh_stiffness_distance(centers, m, a, c)
    if stiff_elements is not None and len(stiff_elements):
        k[stiff_elements] = mesh_stiffness_distance(centers[stiff_elements], m, a_stiff, c)
    return k


def build_problem(mesh: Mesh, params: MaterialParams, bcs, k_mesh=None, supg=True, order=3,
                  frozen_geometry=False, body_s=(0.0, 0.0), body_f=(0.0, 0.0),
                  supg_weight="unit") -> FSIProblem:
    supg_factor(params, supg, supg_weight)   # validates the weight name
    dm, layout = build_layout(mesh)
    for bc in bcs:
        mesh.group_id(bc.group)   # raises for unknown groups
    if k_mesh is None:
        k_mesh = inverse_volume_stiffness(mesh)
    solid_el = np.nonzero(mesh.is_solid())[0]
    fluid_el = np.nonzero(~mesh.is_solid())[0]
    dmask = (~layout.solid_nodes[mesh.elements[fluid_el]]).astype(float)
    prob = FSIProblem(mesh, dm, layout, params, list(bcs), np.asarray(k_mesh, dtype=float),
                      bool(supg), supg_weight, order, frozen_geometry, tuple(body_s), tuple(body_f),
                      solid_el, fluid_el, dmask)
    prob.traction = {bc.group: _traction_vector(prob, bc.group) for bc in bcs
                     if bc.kind == "normal_stress"}
    prob._pattern = _sparsity(dm)
    prob._bc_plan = _bc_plan(prob)
    return prob


def _sparsity(dm: DofMap):
    loc = dm.elem_all                                       # (ne, 39)
    rows = np.repeat(loc, 39, axis=1).ravel()
    cols = np.tile(loc, (1, 39)).ravel()
    n = dm.n_dofs
    key = rows.astype(np.int64) * n + cols
    uniq, inv = np.unique(key, return_inverse=True)
    r, c = uniq // n, uniq % n
    pattern = sp.csr_matrix((np.arange(uniq.size, dtype=float), (r, c)), shape=(n, n))
    # position of each unique key inside the csr data array
    order = pattern.data.astype(np.int64)
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    return pattern.indptr.copy(), pattern.indices.copy(), pos[inv].reshape(dm.n_elements, 39 * 39)


def boundary_quadrature(mesh: Mesh, faces, coords=None):
    """Quadrature data on boundary faces: element, shape values, n*ds weights."""
    pts, w = edge_rule(3)
    X = mesh.nodes if coords is None else coords
    out = []
    for e, le in faces[:, :2]:
        ref = pts[le]
        Nv = q2_shape(ref[:, 0], ref[:, 1])
        dNv = q2_grad(ref[:, 0], ref[:, 1])
        G = np.einsum("ka,qkb->qab", X[mesh.elements[e]], dNv)
        direction = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                     np.array([-1.0, 0.0]), np.array([0.0, -1.0])][le]
        t = G @ direction
        nds = np.stack([t[:, 1], -t[:, 0]], -1) * w[:, None]
        out.append((e, Nv, nds))
    return out


def _traction_vector(prob: FSIProblem, group):
    """Natural vector v with  v . phi = integral of n . phi over the group (reference geometry)."""
    mesh, dm = prob.mesh, prob.dofmap
    v = np.zeros(dm.n_dofs)
    for e, Nv, nds in boundary_quadrature(mesh, mesh.group_faces(group)):
        contrib = np.einsum("qk,qa->ka", Nv, nds)
        np.add.at(v, dm.elem_u[e], contrib.ravel())
    return v


def group_normal_axis(mesh: Mesh, group):
    """Axis (0 or 1) of the common outward normal of an axis-aligned group."""
    normals = []
    for _, _, nds in boundary_quadrature(mesh, mesh.group_faces(group)):
        normals.append(nds / np.linalg.norm(nds, axis=1, keepdims=True))
    n = np.vstack(normals)
    axis = int(np.argmax(np.abs(n[0])))
    if np.abs(np.abs(n[:, axis]) - 1.0).max() > 1e-10:
        raise ConfigError(f"group {group!r}: component constraints need an axis-aligned boundary")
    return axis


def _bc_plan(prob: FSIProblem):
    """Per BC: (node ids, components, field 'd' or 'u', bc)."""
    mesh = prob.mesh
    plan = []
    for bc in prob.bcs:
        nodes = mesh.group_nodes(bc.group)
        if bc.kind == "velocity":
            plan.append((nodes, (0, 1), "u", bc))
        elif bc.kind == "displacement":
            plan.append((nodes, (0, 1), "d", bc))
        elif bc.kind == "normal_stress":
            axis = group_normal_axis(mesh, bc.group)
            plan.append((nodes, (1 - axis,), "u", None))
            plan.append((nodes, (0, 1), "d", None))
        elif bc.kind == "symmetry":
            axis = group_normal_axis(mesh, bc.group)
            plan.append((nodes, (axis,), "u", None))
            plan.append((nodes, (axis,), "d", None))
    return plan


def constraints(prob: FSIProblem, t_new, dt, d_old) -> Constraints:
    """Replaced rows, fixed unknowns and values at time ``t_new``.

    A displacement constraint at a solid-owned node also fixes the velocity
    through the kinematic equation, u = (g - d_old)/dt. The momentum row then
    carries the displacement identity and the kinematic row the velocity
    identity, which keeps both on the diagonal of the reordered Jacobian.
    """
    mesh, dm = prob.mesh, prob.dofmap
    n = dm.n_nodes
    fixed = {}   # (field, node, comp) -> value

    def put(key, val):
        if key in fixed and abs(fixed[key] - val) > 1e-12 * (1.0 + abs(val)):
            raise ConfigError(f"conflicting constraints on {key[0]} of node {key[1]} component {key[2]}")
        fixed.setdefault(key, val)

    for nodes, comps, fld, bc in prob._bc_plan:
        if nodes.size == 0:
            continue
        if bc is None or bc.value is None:
            vals = np.zeros((nodes.size, 2))
        else:
            vals = np.asarray(bc.value(mesh.nodes[nodes], t_new), dtype=float).reshape(nodes.size, 2)
        for i, node in enumerate(nodes):
            for c in comps:
                put((fld, int(node), c), float(vals[i, c]))

    solid = prob.layout.solid_nodes
    rows, cols, values = [], [], []
    for (fld, node, c), val in sorted(fixed.items()):
        d_dof, u_dof = 2 * node + c, 2 * n + 2 * node + c
        if solid[node]:
            if fld == "d":
                u_val = (val - d_old[2 * node + c]) / dt
                if ("u", node, c) in fixed and abs(fixed[("u", node, c)] - u_val) > 1e-10 * (1.0 + abs(u_val)):
                    raise ConfigError(f"velocity constraint at solid node {node} contradicts its displacement")
                rows += [u_dof, d_dof]
                cols += [d_dof, u_dof]
                values += [val, u_val]
            elif ("d", node, c) not in fixed:
                raise ConfigError(f"velocity-only constraint at solid-owned node {node}; "
                                  "constrain its displacement instead")
        else:
            dof = d_dof if fld == "d" else u_dof
            rows.append(dof)
            cols.append(dof)
            values.append(val)
    return Constraints(np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                       np.array(values, dtype=float))


def lift(x, cons: Constraints):
    x = np.array(x, dtype=float)
    x[cons.cols] = cons.values
    return x


# --------------------------------------------------------------------------
# residual and Jacobian


def _gather(prob: FSIProblem, x, x_old):
    dm, mesh = prob.dofmap, prob.mesh
    d, u, p = dm.split(x)
    do, uo, po = dm.split(x_old)
    conn = mesh.elements
    X = mesh.nodes[conn]
    z = np.concatenate([d[conn].reshape(-1, 18), u[conn].reshape(-1, 18), p], axis=1)
    return X, z, do[conn], uo[conn], po


def check_geometry(prob: FSIProblem, x):
    d, _, _ = prob.dofmap.split(x)
    fl = prob.fluid_el
    if fl.size == 0:
        return
    detj = element_jacobians(prob.mesh, prob.order, elements=fl, coords=prob.mesh.nodes + d)
    bad = np.nonzero(detj.min(axis=1) <= 0)[0]
    if bad.size:
        raise ElementInversion(int(fl[bad[0]]), float(detj[bad[0]].min()))


def stabilization_lambdas(prob: FSIProblem, x_old):
    """Element eigenvalue estimates on the geometry of ``x_old`` (fixed over a time step)."""
    d, _, _ = prob.dofmap.split(x_old)
    return stabilization_state(prob.mesh, prob.mesh.nodes + d).lam


def _evaluate(prob: FSIProblem, x, x_old, dt, t_new, lam, want_jac):
    check_geometry(prob, x)
    K = kernels(prob.order, prob.frozen_geometry)
    prm = _params_vector(prob.params, dt, prob.body_s, prob.body_f,
                         supg_factor(prob.params, prob.supg, prob.supg_weight))
    X, z, do, uo, po = _gather(prob, x, x_old)
    ne = prob.mesh.n_elements
    Re = np.zeros((ne, 39))
    Je = np.zeros((ne, 39, 39)) if want_jac else None
    s, f = prob.solid_el, prob.fluid_el
    if s.size:
        args = (z[s], X[s], do[s], uo[s], po[s], prm)
        if want_jac:
            jac, res = K["solid_jac"](*args)
            Je[s] = np.asarray(jac)
        else:
            res = K["solid_res"](*args)
        Re[s] = np.asarray(res)
    if f.size:
        args = (z[f], X[f], do[f], uo[f], lam[f], prob.k_mesh[f], prob.dmask, prm)
        if want_jac:
            jac, res = K["fluid_jac"](*args)
            Je[f] = np.asarray(jac)
        else:
            res = K["fluid_res"](*args)
        Re[f] = np.asarray(res)
    if not np.all(np.isfinite(Re)):
        raise ElementInversion(-1, float("nan"))
    dm = prob.dofmap
    R = np.bincount(dm.elem_all.ravel(), weights=Re.ravel(), minlength=dm.n_dofs)
    for bc in prob.bcs:
        if bc.kind == "normal_stress":
            R -= bc.value(t_new) * prob.traction[bc.group]
    if not want_jac:
        return R, None
    indptr, indices, pos = prob._pattern
    data = np.bincount(pos.ravel(), weights=Je.reshape(ne, -1).ravel(), minlength=indices.size)
    J = sp.csr_matrix((data, indices, indptr), shape=(dm.n_dofs, dm.n_dofs))
    return R, J


def residual(prob: FSIProblem, x, x_old, dt, t_new, lam=None):
    """Natural residual (no Dirichlet row replacement)."""
    lam = stabilization_lambdas(prob, x_old) if lam is None else lam
    return _evaluate(prob, x, x_old, dt, t_new, lam, False)[0]


def jacobian(prob: FSIProblem, x, x_old, dt, t_new, lam=None):
    """(J, R) in the natural numbering, J the exact derivative of R."""
    lam = stabilization_lambdas(prob, x_old) if lam is None else lam
    R, J = _evaluate(prob, x, x_old, dt, t_new, lam, True)
    return J, R


def directional_derivative_errors(prob: FSIProblem, x, x_old, dt, t_new, directions, eps=1e-6):
    """Relative error of J v against the central difference (R(x + eps v) - R(x - eps v)) / 2 eps."""
    lam = stabilization_lambdas(prob, x_old)
    J, _ = jacobian(prob, x, x_old, dt, t_new, lam)
    errs = []
    for v in directions:
        fd = (residual(prob, x + eps * v, x_old, dt, t_new, lam)
              - residual(prob, x - eps * v, x_old, dt, t_new, lam)) / (2 * eps)
        Jv = J @ v
        errs.append(float(np.linalg.norm(fd - Jv) / np.linalg.norm(Jv)))
    return np.array(errs)


def apply_dirichlet(J, R, cons: Constraints, x):
    """Replace constrained rows by identity rows e_col with residual x[col] - value."""
    n = J.shape[0]
    keep = np.ones(n)
    keep[cons.rows] = 0.0
    J = sp.diags(keep) @ J
    J = J + sp.csr_matrix((np.ones(cons.rows.size), (cons.rows, cons.cols)), shape=J.shape)
    J = sp.csr_matrix(J)
    J.eliminate_zeros()
    J.sort_indices()
    R = R.copy()
    R[cons.rows] = x[cons.cols] - cons.values
    return J, R


def rest_state(prob: FSIProblem):
    """d = u = 0, p_f = 0 and p_s = C1, which makes the solid stress vanish."""
    x = np.zeros(prob.n_dofs)
    x[prob.layout["ps"][0::3]] = prob.params.C1
    return x


# --------------------------------------------------------------------------
# Newton


@dataclass
class NewtonConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_iters: int = 15
    line_search: bool = True     # backtrack by halving until the residual norm drops
    min_step: float = 1.0 / 16

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_iters < 1:
            raise ConfigError("Newton tolerances must be positive and max_iters >= 1")
        if not 0 < self.min_step <= 1:
            raise ConfigError("min_step must lie in (0, 1]")


@dataclass
class LinearStats:
    iterations: int
    r0: float
    rN: float
    converged: bool
    seconds: float = 0.0


@dataclass
class StepStats:
    step: int
    t: float
    dt: float
    newton_iterations: int = 0
    residuals: list = field(default_factory=list)
    linear: list = field(default_factory=list)
    converged: bool = False
    seconds: float = 0.0


@dataclass
class SolveContext:
    """What a linear solver may need besides the matrix: the nonlinear iterate and step data."""
    problem: FSIProblem
    x: np.ndarray
    x_old: np.ndarray
    dt: float
    t_new: float
    lam: np.ndarray
    cons: Constraints


def _line_search(norm_at, x, dx, rnorm, cfg: NewtonConfig):
    """Halve the step until the residual norm drops; if no step down to min_step
    achieves that, fall back to the full Newton step (unless it inverts an element)."""
    inverted = None
    try:
        full = norm_at(x + dx)
    except ElementInversion as exc:
        if not cfg.line_search:
            raise
        full, inverted = np.inf, exc
    if not cfg.line_search or full <= (1.0 - 1e-4) * rnorm:
        return 1.0, full
    a = 0.5
    while a >= cfg.min_step:
        try:
            trial = norm_at(x + a * dx)
        except ElementInversion:
            trial = np.inf
        if trial <= (1.0 - 1e-4 * a) * rnorm:
            return a, trial
        a /= 2
    if inverted is not None:
        raise inverted
    return 1.0, full


def newton_solve(prob: FSIProblem, x_old, t_new, dt, linear_solver, cfg: NewtonConfig | None = None,
                 step=0, x_guess=None):
    """Newton iteration for one time step. Returns (x_new, StepStats).

    ``linear_solver(J, b, ctx)`` returns (dx, LinearStats) for J dx = b where J
    already carries the Dirichlet rows.
    """
    cfg = cfg or NewtonConfig()
    t0 = time.perf_counter()
    stats = StepStats(step, t_new, dt)
    lam = stabilization_lambdas(prob, x_old)
    cons = constraints(prob, t_new, dt, x_old)
    x = lift(x_old if x_guess is None else x_guess, cons)

    def norm_at(xt):
        R = residual(prob, xt, x_old, dt, t_new, lam)
        R[cons.rows] = xt[cons.cols] - cons.values
        return np.linalg.norm(R)

    r0 = norm_at(x)
    stats.residuals.append(r0)
    target = max(cfg.rel_tol * r0, cfg.abs_tol)
    rnorm = r0
    for it in range(1, cfg.max_iters + 1):
        if rnorm <= target:
            break
        J, Rn = jacobian(prob, x, x_old, dt, t_new, lam)
        J, R = apply_dirichlet(J, Rn, cons, x)
        ctx = SolveContext(prob, x, x_old, dt, t_new, lam, cons)
        dx, lin = linear_solver(J, -R, ctx)
        stats.linear.append(lin)
        a, trial = _line_search(norm_at, x, dx, rnorm, cfg)
        x = x + a * dx
        rnorm = trial
        stats.residuals.append(rnorm)
        stats.newton_iterations = it
        if not np.isfinite(rnorm):
            break
    stats.converged = bool(rnorm <= target)
    stats.seconds = time.perf_counter() - t0
    return x, stats


def advance(prob: FSIProblem, x_old, t_old, dt, linear_solver, cfg=None, step=0):
    """One time step with a single retry at dt/2 (as two half steps) on failure."""
    try:
        x, st = newton_solve(prob, x_old, t_old + dt, dt, linear_solver, cfg, step)
        if st.converged:
            return x, [st]
        reason = f"Newton did not converge (residuals {st.residuals})"
    except ElementInversion as exc:
        reason = str(exc)
    out = []
    x = x_old
    for half in range(2):
        try:
            x, st = newton_solve(prob, x, t_old + (half + 1) * 0.5 * dt, 0.5 * dt, linear_solver, cfg, step)
        except ElementInversion as exc:
            raise SolverFailure(f"{reason}; retry at dt/2 failed: {exc}", step) from None
        out.append(st)
        if not st.converged:
            raise SolverFailure(f"{reason}; retry at dt/2 failed to converge", step)
    return x, out
