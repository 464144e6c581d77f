"""Row/column orderings J, J1, J2 of the monolithic Jacobian and the smoother index sets.

Row blocks are named after the equations they hold: K (solid kinematics,
natural d^s rows), A (mesh motion, d^f rows), S (solid/interface momentum,
u^s rows), F (fluid momentum, u^f rows), V (solid continuity), W (fluid
continuity). Orderings only permute, so ``A_ord = A[row_perm][:, col_perm]``.

Within each block, rows and columns enumerate nodes in the same order. J1
places S opposite d^s and K opposite u^s, so position i of a row block and
of the matching column block always refer to the same node and component.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import FieldLayout
from .mesh import Mesh

ROW_FIELD = {"K": "ds", "A": "df", "S": "us", "F": "uf", "V": "ps", "W": "pf"}

ORDERINGS = {
    "j": (("K", "A", "S", "F", "V", "W"), ("ds", "df", "us", "uf", "ps", "pf")),
    "j1": (("S", "A", "K", "F", "V", "W"), ("ds", "df", "us", "uf", "ps", "pf")),
    "j2": (("S", "A", "V", "K", "F", "W"), ("ds", "df", "ps", "us", "uf", "pf")),
}


@dataclass
class OrderingPlan:
    name: str
    row_perm: np.ndarray
    col_perm: np.ndarray
    row_blocks: dict     # equation name -> (start, stop)
    col_blocks: dict     # field name -> (start, stop)

    def __post_init__(self):
        self.row_inv = np.argsort(self.row_perm)
        self.col_inv = np.argsort(self.col_perm)

    @property
    def n(self):
        return self.row_perm.size

    def matrix(self, A):
        A = sp.csr_matrix(A)
        return sp.csr_matrix(A[self.row_perm][:, self.col_perm])

    def rhs(self, b):
        return np.asarray(b)[self.row_perm]

    def solution(self, x_ord):
        """Ordered unknown vector -> natural numbering."""
        return np.asarray(x_ord)[self.col_inv]

    def unknowns(self, x_nat):
        return np.asarray(x_nat)[self.col_perm]

    def col_positions(self, natural_dofs):
        return self.col_inv[np.asarray(natural_dofs, dtype=np.int64)]

    def row_positions(self, natural_rows):
        return self.row_inv[np.asarray(natural_rows, dtype=np.int64)]

    def col_range(self, field):
        a, b = self.col_blocks[field]
        return np.arange(a, b)

    def row_range(self, eq):
        a, b = self.row_blocks[eq]
        return np.arange(a, b)


def build_ordering(layout: FieldLayout, name: str) -> OrderingPlan:
    rows, cols = ORDERINGS[name]
    row_perm = np.concatenate([layout[ROW_FIELD[r]] for r in rows])
    col_perm = np.concatenate([layout[c] for c in cols])

    def offsets(names, fields):
        out, pos = {}, 0
        for nm, f in zip(names, fields):
            size = len(layout[f])
            out[nm] = (pos, pos + size)
            pos += size
        return out

    return OrderingPlan(name, row_perm, col_perm,
                        offsets(rows, [ROW_FIELD[r] for r in rows]), offsets(cols, cols))


def build_orderings(layout: FieldLayout):
    return {name: build_ordering(layout, name) for name in ORDERINGS}


def block_cycle_3_4_5(blocks):
    """Reorder a 6-entry block list: entries 3, 4, 5 (1-based) move to 4, 5, 3."""
    b = list(blocks)
    return [b[0], b[1], b[4], b[2], b[3], b[5]]


# --------------------------------------------------------------------------
# Vanka and field-split index sets


@dataclass
class VankaBlock:
    indices: np.ndarray   # ordered positions (rows and columns), sorted
    seeds: np.ndarray     # elements whose pressures seed the block
    region: str           # "solid" or "fluid"
    label: str = ""


def region_patches(mesh: Mesh, region: str, elems_per_block: int):
    """Disjoint runs of consecutive element ids covering one region."""
    if elems_per_block < 1:
        raise ValueError("elems_per_block must be >= 1")
    solid = mesh.is_solid()
    ids = np.nonzero(solid if region == "solid" else ~solid)[0]
    return [ids[i:i + elems_per_block] for i in range(0, ids.size, elems_per_block)]


def patch_dofs(mesh: Mesh, layout: FieldLayout, elems, fields, owner_mask=None):
    """Natural dofs of ``fields`` supported on the closure of ``elems``.

    d/u fields take the nodes of the elements (every basis function whose
    support meets a selected pressure's element), restricted to nodes owned by
    the field's region; pressure fields take the elements' own modes.
    """
    n = mesh.n_nodes
    nodes = np.unique(mesh.elements[elems])
    out = []
    for f in fields:
        if f[0] in "du":
            own = layout.solid_nodes[nodes] if f[1] == "s" else ~layout.solid_nodes[nodes]
            sel = nodes[own]
            base = 0 if f[0] == "d" else 2 * n
            out.append(base + (2 * sel[:, None] + np.arange(2)).ravel())
        else:
            want_solid = f[1] == "s"
            sel = elems[mesh.is_solid()[elems] == want_solid]
            out.append(4 * n + (3 * sel[:, None] + np.arange(3)).ravel())
    return np.unique(np.concatenate(out)) if out else np.zeros(0, dtype=np.int64)


def element_layer(mesh: Mesh, elems, layers=1):
    """``elems`` plus every element sharing a node with them, repeated ``layers`` times."""
    sel = np.zeros(mesh.n_elements, dtype=bool)
    sel[elems] = True
    for _ in range(layers):
        touched = np.zeros(mesh.n_nodes, dtype=bool)
        touched[mesh.elements[sel].ravel()] = True
        sel |= touched[mesh.elements].any(axis=1)
    return np.nonzero(sel)[0]


def _blocks(mesh, layout, plan, region, fields, elems_per_block, overlap=0, tag=""):
    blocks = []
    for i, patch in enumerate(region_patches(mesh, region, elems_per_block)):
        support = element_layer(mesh, patch, overlap) if overlap else patch
        if overlap:
            # the overlap widens the node set but stays inside the region
            support = support[(mesh.is_solid()[support]) == (region == "solid")]
        nat = patch_dofs(mesh, layout, support, fields)
        if nat.size == 0:
            continue
        blocks.append(VankaBlock(np.sort(plan.col_positions(nat)), patch, region, f"{tag}{region}{i}"))
    return blocks


def build_vanka_blocks(mesh: Mesh, layout: FieldLayout, plan: OrderingPlan, elems_per_block=4):
    """AS blocks: solid over [d^s, u^s, p^s], fluid over [d^f, u^f, p^f]; solid first."""
    return (_blocks(mesh, layout, plan, "solid", ("ds", "us", "ps"), elems_per_block)
            + _blocks(mesh, layout, plan, "fluid", ("df", "uf", "pf"), elems_per_block))


def build_fieldsplit_sets(layout: FieldLayout, plan: OrderingPlan | None = None):
    """group1 = [d^s, d^f, p^s], group2 = [u^s, u^f, p^f] as natural dofs, or ordered positions."""
    g1 = np.concatenate([layout["ds"], layout["df"], layout["ps"]])
    g2 = np.concatenate([layout["us"], layout["uf"], layout["pf"]])
    if plan is not None:
        g1, g2 = plan.col_positions(g1), plan.col_positions(g2)
    return {"group1": np.sort(g1), "group2": np.sort(g2)}


@dataclass
class FieldSplitBlocks:
    group1: np.ndarray
    group2: np.ndarray
    as1: list            # solid [d^s, p^s] Vanka blocks, then overlapping fluid d^f blocks
    jacobi: np.ndarray   # positions of u^s
    as2: list            # fluid [u^f, p^f] Vanka blocks


def build_fieldsplit_blocks(mesh: Mesh, layout: FieldLayout, plan: OrderingPlan, elems_per_block=4,
                            overlap=1):
    sets = build_fieldsplit_sets(layout, plan)
    as1 = (_blocks(mesh, layout, plan, "solid", ("ds", "ps"), elems_per_block, tag="as1-")
           + _blocks(mesh, layout, plan, "fluid", ("df",), elems_per_block, overlap, tag="as1-"))
    as2 = _blocks(mesh, layout, plan, "fluid", ("uf", "pf"), elems_per_block, tag="as2-")
    return FieldSplitBlocks(sets["group1"], sets["group2"], as1,
                            np.sort(plan.col_positions(layout["us"])), as2)
