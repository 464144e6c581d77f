"""Q2 vector spaces for d and u, element-wise P1 pressure, and the six-field dof layout.

Global numbering is fixed: displacement dof ``2*node + c``, velocity dof
``2*n_nodes + 2*node + c``, pressure dof ``4*n_nodes + 3*elem + b``. Residual
rows use the same numbering, so the row of a displacement dof holds the
kinematic equation (solid-owned node) or the mesh-motion equation (fluid
node), and the row of a velocity dof holds the momentum balance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvertedElement
from .linalg import IndexSet
from .mesh import FLUID, Mesh
from .reference import p1_shape, q2_grad, q2_shape, reference_element

FIELDS = ("ds", "df", "us", "uf", "ps", "pf")


@dataclass
class DofMap:
    n_nodes: int
    n_elements: int
    elem_d: np.ndarray   # (ne, 18), node-major then component
    elem_u: np.ndarray   # (ne, 18)
    elem_p: np.ndarray   # (ne, 3)

    @property
    def n_dofs(self):
        return 4 * self.n_nodes + 3 * self.n_elements

    def d(self, node, c):
        return 2 * node + c

    def u(self, node, c):
        return 2 * self.n_nodes + 2 * node + c

    def p(self, elem, b):
        return 4 * self.n_nodes + 3 * elem + b

    @property
    def elem_all(self):
        """(ne, 39) local-to-global map in local order d, u, p."""
        return np.hstack([self.elem_d, self.elem_u, self.elem_p])

    def split(self, x):
        """Natural vector -> (d (n,2), u (n,2), p (ne,3)) views."""
        n = self.n_nodes
        return (x[:2 * n].reshape(n, 2), x[2 * n:4 * n].reshape(n, 2),
                x[4 * n:].reshape(self.n_elements, 3))

    def join(self, d, u, p):
        return np.concatenate([np.ravel(d), np.ravel(u), np.ravel(p)])


@dataclass
class FieldLayout:
    fields: dict                 # name -> IndexSet
    solid_nodes: np.ndarray      # bool per node: owned by the solid (incl. interface)
    interface_nodes: np.ndarray  # node ids shared by fluid and solid elements
    n_dofs: int

    def __getitem__(self, name) -> np.ndarray:
        return self.fields[name].indices

    def sizes(self):
        return {k: len(v) for k, v in self.fields.items()}

    def field_of(self):
        """Field index (position in FIELDS) for every dof."""
        out = np.full(self.n_dofs, -1, dtype=np.int64)
        for i, name in enumerate(FIELDS):
            out[self[name]] = i
        return out


def build_dofmap(mesh: Mesh) -> DofMap:
    n, ne = mesh.n_nodes, mesh.n_elements
    conn = mesh.elements
    comp = np.arange(2)
    elem_d = (2 * conn[:, :, None] + comp).reshape(ne, 18)
    elem_u = elem_d + 2 * n
    elem_p = 4 * n + 3 * np.arange(ne)[:, None] + np.arange(3)
    return DofMap(n, ne, elem_d, elem_u, elem_p)


def build_layout(mesh: Mesh):
    dm = build_dofmap(mesh)
    n = mesh.n_nodes
    solid_el = mesh.is_solid()
    solid_nodes = np.zeros(n, dtype=bool)
    solid_nodes[np.unique(mesh.elements[solid_el])] = True
    fluid_nodes = np.zeros(n, dtype=bool)
    fluid_nodes[np.unique(mesh.elements[~solid_el])] = True
    interface = np.nonzero(solid_nodes & fluid_nodes)[0]

    def node_dofs(mask, offset):
        ids = np.nonzero(mask)[0]
        return offset + (2 * ids[:, None] + np.arange(2)).ravel()

    def elem_dofs(mask):
        ids = np.nonzero(mask)[0]
        return (4 * n + 3 * ids[:, None] + np.arange(3)).ravel()

    fields = {
        "ds": IndexSet(node_dofs(solid_nodes, 0), "ds"),
        "df": IndexSet(node_dofs(~solid_nodes, 0), "df"),
        "us": IndexSet(node_dofs(solid_nodes, 2 * n), "us"),
        "uf": IndexSet(node_dofs(~solid_nodes, 2 * n), "uf"),
        "ps": IndexSet(elem_dofs(solid_el), "ps"),
        "pf": IndexSet(elem_dofs(~solid_el), "pf"),
    }
    return dm, FieldLayout(fields, solid_nodes, interface, dm.n_dofs)


def interpolate(mesh: Mesh, values, e, xi, eta, coords=None):
    """Value and physical gradient of nodal field ``values`` at (xi, eta) in element ``e``.

    ``values`` has shape (n_nodes,) or (n_nodes, m); the gradient has a
    trailing axis of length 2.
    """
    X = (mesh.nodes if coords is None else coords)[mesh.elements[e]]
    dN = q2_grad(xi, eta)
    G = X.T @ dN
    det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    if not det > 0:
        raise InvertedElement(int(e), float(det))
    gradN = dN @ np.linalg.inv(G)
    v = np.asarray(values)[mesh.elements[e]]
    val = q2_shape(xi, eta) @ v
    grad = np.tensordot(v, gradN, axes=(0, 0))
    return val, grad


def pressure_at(p_elem, xi, eta):
    return p1_shape(xi, eta) @ p_elem


def element_geometry(X, order=3):
    """Physical gradients and weights for elements with node coords ``X`` (ne, 9, 2)."""
    ref = reference_element(order)
    G = np.einsum("eka,qkb->eqab", X, ref.dN)
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    bad = np.nonzero(det.min(axis=1) <= 0)[0]
    if bad.size:
        raise InvertedElement(int(bad[0]), float(det[bad[0]].min()))
    Ginv = np.linalg.inv(G)
    gradN = np.einsum("qkb,eqba->eqka", ref.dN, Ginv)
    return gradN, det * ref.weights


def scalar_matrices(mesh: Mesh, order=3):
    """Scalar Q2 stiffness and mass matrices on the undeformed mesh (n_nodes x n_nodes)."""
    ref = reference_element(order)
    X = mesh.nodes[mesh.elements]
    gradN, wdet = element_geometry(X, order)
    Ke = np.einsum("eqia,eqja,eq->eij", gradN, gradN, wdet)
    Me = np.einsum("qi,qj,eq->eij", ref.N, ref.N, wdet)
    rows = np.repeat(mesh.elements, 9, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 9)).ravel()
    n = mesh.n_nodes
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    M.sum_duplicates()
    return K, M


def fluid_elements(mesh: Mesh):
    return np.nonzero(mesh.element_region == FLUID)[0]
