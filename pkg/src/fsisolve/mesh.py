"""Quadrilateral Q2 meshes with region/boundary tags and nested midpoint refinement.

Every element stores its 9 biquadratic geometry nodes, so curved boundaries
are represented isoparametrically and refinement places new nodes through the
parent's Q2 map. The fine spaces are therefore exactly nested.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvertedElement
from .reference import EDGE_NODES, Q2_NODES, q2_shape, reference_element

FLUID, SOLID, CLOT = 0, 1, 2
REGION_NAMES = {FLUID: "fluid", SOLID: "solid", CLOT: "clot"}

ROLES = ("inlet", "outlet", "clamped", "symmetry", "free", "wall")


@dataclass
class Mesh:
    nodes: np.ndarray            # (n_nodes, 2), metres
    elements: np.ndarray         # (n_elem, 9) Q2 connectivity, corners counterclockwise
    element_region: np.ndarray   # (n_elem,)
    boundary_faces: np.ndarray   # (n_faces, 3): element, local edge, group index
    groups: list[str]
    level: int = 0
    roles: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def corners(self):
        return self.elements[:, :4]

    @property
    def n_vertices(self):
        return np.unique(self.corners).size

    def is_solid(self):
        return self.element_region != FLUID

    def group_id(self, name):
        try:
            return self.groups.index(name)
        except ValueError:
            raise KeyError(f"unknown boundary group {name!r}") from None

    def group_faces(self, name):
        return self.boundary_faces[self.boundary_faces[:, 2] == self.group_id(name)]

    def group_nodes(self, name):
        f = self.group_faces(name)
        if f.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.elements[f[:, 0][:, None], EDGE_NODES[f[:, 1]]])

    def groups_with_role(self, role):
        return [g for g in self.groups if self.roles.get(g) == role]


def element_jacobians(mesh: Mesh, order=3, elements=None, coords=None):
    """Geometry Jacobian determinants at Gauss points, shape (n_elem, nq)."""
    ref = reference_element(order)
    X = mesh.nodes if coords is None else coords
    conn = mesh.elements if elements is None else mesh.elements[elements]
    Xe = X[conn]                                       # (ne, 9, 2)
    G = np.einsum("eka,qkb->eqab", Xe, ref.dN)          # dx_a/dxi_b
    return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]


def element_volumes(mesh: Mesh, coords=None, order=3, elements=None):
    detj = element_jacobians(mesh, order, elements=elements, coords=coords)
    bad = np.nonzero(detj.min(axis=1) <= 0)[0]
    if bad.size:
        e = int(bad[0]) if elements is None else int(np.asarray(elements)[bad[0]])
        raise InvertedElement(e, float(detj[bad[0]].min()))
    return detj @ reference_element(order).weights


def element_volume(mesh: Mesh, e: int, coords=None):
    detj = element_jacobians(mesh, elements=np.array([e]), coords=coords)[0]
    if detj.min() <= 0:
        raise InvertedElement(e, float(detj.min()))
    return float(detj @ reference_element(3).weights)


def element_centers(mesh: Mesh, coords=None):
    X = mesh.nodes if coords is None else coords
    return X[mesh.elements[:, 8]]


def check_mesh(mesh: Mesh):
    detj = element_jacobians(mesh)
    bad = np.nonzero(detj.min(axis=1) <= 0)[0]
    if bad.size:
        raise InvertedElement(int(bad[0]), float(detj[bad[0]].min()))
    seen = set()
    for e, le, _ in mesh.boundary_faces:
        key = (int(e), int(le))
        if key in seen:
            raise ValueError(f"boundary face {key} tagged twice")
        seen.add(key)
    return True


# --------------------------------------------------------------------------
# geometry cases


@dataclass
class GeometryCase:
    """Parametric 2D geometry. Lengths in metres.

    ``kind`` is one of ``channel`` (flexible-wall straight channel, optionally
    with a circular-arc bulge on the upper wall), ``square`` (all-fluid unit
    patch), ``duct`` (the channel lumen alone, rigid no-slip walls) or
    ``half_channel`` (lower wall plus a symmetry axis).
    """
    name: str = "channel"
    kind: str = "channel"
    length: float = 10e-3
    lumen: float = 2e-3
    wall: float = 0.25e-3
    bulge_radius: float = 0.0
    bulge_center: float | None = None
    nx: int = 8
    ny_fluid: int = 2
    ny_wall: int = 1
    roles: dict = field(default_factory=dict)


def _layered_coords(n_el, edges):
    """Q2 node coordinates (2n+1 values) for a piecewise-uniform 1D grid."""
    out = [edges[0][0]]
    for (a, b), n in zip(edges, n_el):
        h = (b - a) / n
        for k in range(1, 2 * n + 1):
            out.append(a + 0.5 * k * h)
    return np.array(out)


def _structured(xs, ys, regions_per_row, groups, face_groups):
    nxn, nyn = xs.size, ys.size
    nx, ny = (nxn - 1) // 2, (nyn - 1) // 2
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.stack([X.ravel(), Y.ravel()], -1)

    def nid(i, j):
        return j * nxn + i

    elems, regs = [], []
    for ey in range(ny):
        for ex in range(nx):
            i0, j0 = 2 * ex, 2 * ey
            elems.append([
                nid(i0, j0), nid(i0 + 2, j0), nid(i0 + 2, j0 + 2), nid(i0, j0 + 2),
                nid(i0 + 1, j0), nid(i0 + 2, j0 + 1), nid(i0 + 1, j0 + 2), nid(i0, j0 + 1),
                nid(i0 + 1, j0 + 1),
            ])
            regs.append(regions_per_row[ey])
    faces = []
    for ey in range(ny):
        for ex in range(nx):
            e = ey * nx + ex
            for le, side in ((0, "bottom"), (1, "right"), (2, "top"), (3, "left")):
                on = {"bottom": ey == 0, "top": ey == ny - 1, "left": ex == 0, "right": ex == nx - 1}[side]
                if on:
                    g = face_groups(side, ex, ey)
                    faces.append([e, le, groups.index(g)])
    return nodes, np.array(elems), np.array(regs), np.array(faces, dtype=np.int64)


def bulge_profile(x, radius, center):
    """Circular-arc bump: a circle of ``radius`` whose center sits radius/2 below the wall line."""
    if radius <= 0:
        return np.zeros_like(x)
    r2 = radius ** 2 - (x - center) ** 2
    return np.maximum(np.sqrt(np.maximum(r2, 0.0)) - 0.5 * radius, 0.0)


def build_case(case: GeometryCase) -> Mesh:
    if case.kind == "square":
        n = case.nx
        xs = _layered_coords([n], [(0.0, case.length)])
        ys = _layered_coords([n], [(0.0, case.length)])
        groups = ["bottom", "right", "top", "left"]
        nodes, el, reg, faces = _structured(xs, ys, [FLUID] * n, groups, lambda side, ex, ey: side)
        roles = {"bottom": "wall", "right": "outlet", "top": "wall", "left": "inlet"}
        roles.update(case.roles)
        mesh = Mesh(nodes, el, reg, faces, groups, 0, roles)
        check_mesh(mesh)
        return mesh

    L, R, t = case.length, 0.5 * case.lumen, case.wall
    if min(L, R, t) <= 0 or case.nx < 1 or case.ny_fluid < 1 or case.ny_wall < 1:
        raise ValueError("degenerate geometry dimensions")
    if t >= case.lumen:
        raise ValueError("wall thickness must be smaller than the channel height")

    xs = _layered_coords([case.nx], [(0.0, L)])
    if case.kind == "half_channel":
        # lumen half [0, R] above the symmetry axis, wall on top
        nyf = case.ny_fluid
        ys = _layered_coords([nyf, case.ny_wall], [(0.0, R), (R, R + t)])
        rows = [FLUID] * nyf + [SOLID] * case.ny_wall
        groups = ["axis", "outlet", "inlet", "wall_outlet", "wall_inlet", "outer"]

        def fg(side, ex, ey):
            if side == "bottom":
                return "axis"
            if side == "top":
                return "outer"
            fluid = rows[ey] == FLUID
            if side == "left":
                return "outlet" if fluid else "wall_outlet"
            return "inlet" if fluid else "wall_inlet"

        roles = {"axis": "symmetry", "outlet": "outlet", "inlet": "inlet",
                 "wall_outlet": "clamped", "wall_inlet": "clamped", "outer": "free"}
    elif case.kind == "duct":
        # rigid straight channel: lumen only, walls as no-slip boundaries
        nyf = case.ny_fluid
        ys = _layered_coords([nyf], [(-R, R)])
        rows = [FLUID] * nyf
        groups = ["outlet", "inlet", "bottom", "top"]

        def fg(side, ex, ey):
            return {"left": "outlet", "right": "inlet"}.get(side, side)

        roles = {"outlet": "outlet", "inlet": "inlet", "bottom": "wall", "top": "wall"}
    elif case.kind == "channel":
        nyf, nyw = case.ny_fluid, case.ny_wall
        ys = _layered_coords([nyw, nyf, nyw], [(-R - t, -R), (-R, R), (R, R + t)])
        rows = [SOLID] * nyw + [FLUID] * nyf + [SOLID] * nyw
        groups = ["outlet", "inlet", "wall_outlet", "wall_inlet", "outer"]

        def fg(side, ex, ey):
            if side in ("bottom", "top"):
                return "outer"
            fluid = rows[ey] == FLUID
            if side == "left":
                return "outlet" if fluid else "wall_outlet"
            return "inlet" if fluid else "wall_inlet"

        roles = {"outlet": "outlet", "inlet": "inlet", "wall_outlet": "clamped",
                 "wall_inlet": "clamped", "outer": "free"}
    else:
        raise ValueError(f"unknown geometry kind {case.kind!r}")

    roles.update(case.roles)
    nodes, el, reg, faces = _structured(xs, ys, rows, groups, fg)
    if case.bulge_radius > 0:
        center = 0.5 * L if case.bulge_center is None else case.bulge_center
        b = bulge_profile(nodes[:, 0], case.bulge_radius, center)
        y = nodes[:, 1]
        upper = np.clip(y / R, 0.0, 1.0)
        nodes = nodes.copy()
        nodes[:, 1] = np.where(y >= R, y + b, np.where(y > 0, y + b * upper, y))
    mesh = Mesh(nodes, el, reg, faces, groups, 0, roles)
    check_mesh(mesh)
    return mesh


def cavity_elements(mesh: Mesh, case: GeometryCase):
    """Fluid elements above the lumen centreline inside the bulge span."""
    center = 0.5 * case.length if case.bulge_center is None else case.bulge_center
    half = 0.5 * np.sqrt(3.0) * case.bulge_radius
    c = element_centers(mesh)
    fluid = mesh.element_region == FLUID
    sel = fluid & (np.abs(c[:, 0] - center) < half) & (c[:, 1] > 0.0)
    return np.nonzero(sel)[0]


def quad_mesh(corners, regions=None, quads=None):
    """Mesh from bilinear quads given by corner coordinates (counterclockwise).

    ``corners`` is (n_vertices, 2); ``quads`` lists 4 vertex ids per element
    (defaults to a single element). Edge and center nodes sit at the bilinear
    positions. Every boundary edge goes into one group named ``boundary``.
    """
    corners = np.asarray(corners, dtype=float)
    quads = np.array([[0, 1, 2, 3]]) if quads is None else np.asarray(quads)
    regions = np.zeros(len(quads), dtype=np.int64) if regions is None else np.asarray(regions)
    nodes = list(corners)
    edge_ids = {}
    edge_count = {}
    elems = []
    for q in quads:
        conn = list(q)
        for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
            key = (min(q[a], q[b]), max(q[a], q[b]))
            edge_count[key] = edge_count.get(key, 0) + 1
            if key not in edge_ids:
                edge_ids[key] = len(nodes)
                nodes.append(0.5 * (corners[q[a]] + corners[q[b]]))
            conn.append(edge_ids[key])
        conn.append(len(nodes))
        nodes.append(corners[q].mean(axis=0))
        elems.append(conn)
    faces = []
    for e, q in enumerate(quads):
        for le, (a, b) in enumerate(((0, 1), (1, 2), (2, 3), (3, 0))):
            if edge_count[(min(q[a], q[b]), max(q[a], q[b]))] == 1:
                faces.append([e, le, 0])
    mesh = Mesh(np.array(nodes), np.array(elems), regions, np.array(faces, dtype=np.int64),
                ["boundary"], 0, {"boundary": "wall"})
    check_mesh(mesh)
    return mesh


# --------------------------------------------------------------------------
# refinement

# children in counterclockwise order, as (cx, cy) offsets
_CHILDREN = [(0, 0), (1, 0), (1, 1), (0, 1)]
# (parent local edge) -> children adjacent to it, ordered along the edge
_EDGE_CHILDREN = {0: (0, 1), 1: (1, 2), 2: (2, 3), 3: (3, 0)}
# Q2 local node -> position on the 3x3 grid (a, b) with xi = a - 1
_GRID = (Q2_NODES + 1).astype(int)


def refine_mesh(mesh: Mesh):
    """Midpoint refinement: each Q2 quad splits into four.

    Returns ``(fine_mesh, parent, node_host)`` where ``parent[k]`` is the coarse
    element of fine element ``k`` and ``node_host[n] = (element, xi, eta)``
    locates fine node ``n`` inside the coarse mesh. Coarse nodes keep their ids.
    """
    n_old = mesh.n_nodes
    new_coords, hosts = [], []
    keys = {}
    host = np.zeros((n_old, 3))
    # coarse nodes: host from the first element that owns them
    seen = np.zeros(n_old, dtype=bool)
    for e, conn in enumerate(mesh.elements):
        for k, n in enumerate(conn):
            if not seen[n]:
                seen[n] = True
                host[n] = (e, Q2_NODES[k, 0], Q2_NODES[k, 1])

    fine_elems = np.zeros((4 * mesh.n_elements, 9), dtype=np.int64)
    grid_ids = np.zeros((5, 5), dtype=np.int64)
    for e, conn in enumerate(mesh.elements):
        Xe = mesh.nodes[conn]
        coarse_grid = {}
        for k in range(9):
            coarse_grid[(2 * _GRID[k, 0], 2 * _GRID[k, 1])] = conn[k]
        for a in range(5):
            for b in range(5):
                if (a, b) in coarse_grid:
                    grid_ids[a, b] = coarse_grid[(a, b)]
                    continue
                if a in (0, 4) or b in (0, 4):
                    # point on a parent edge at a quarter position
                    if b == 0:
                        v0, v1, t = conn[0], conn[1], a
                    elif a == 4:
                        v0, v1, t = conn[1], conn[2], b
                    elif b == 4:
                        v0, v1, t = conn[2], conn[3], 4 - a
                    else:
                        v0, v1, t = conn[3], conn[0], 4 - b
                    key = ("e", v0, v1, t) if v0 < v1 else ("e", v1, v0, 4 - t)
                else:
                    key = ("i", e, a, b)
                nid = keys.get(key)
                if nid is None:
                    xi, eta = a / 2.0 - 1.0, b / 2.0 - 1.0
                    nid = n_old + len(new_coords)
                    keys[key] = nid
                    new_coords.append(q2_shape(xi, eta) @ Xe)
                    hosts.append((e, xi, eta))
                grid_ids[a, b] = nid
        for c, (cx, cy) in enumerate(_CHILDREN):
            fine_elems[4 * e + c] = grid_ids[2 * cx + _GRID[:, 0], 2 * cy + _GRID[:, 1]]

    nodes = np.vstack([mesh.nodes, np.array(new_coords).reshape(-1, 2)])
    node_host = np.vstack([host, np.array(hosts).reshape(-1, 3)])
    parent = np.repeat(np.arange(mesh.n_elements), 4)
    region = mesh.element_region[parent]
    faces = []
    for e, le, g in mesh.boundary_faces:
        for c in _EDGE_CHILDREN[int(le)]:
            faces.append([4 * e + c, le, g])
    fine = Mesh(nodes, fine_elems, region, np.array(faces, dtype=np.int64),
                list(mesh.groups), mesh.level + 1, dict(mesh.roles))
    return fine, parent, node_host


@dataclass
class MeshHierarchy:
    levels: list
    parent_map: list = field(default_factory=list)   # parent_map[l-1]: level l element -> level l-1 parent
    node_host: list = field(default_factory=list)    # node_host[l-1]: level l node -> (coarse elem, xi, eta)

    @property
    def finest(self) -> Mesh:
        return self.levels[-1]

    def node_origin(self, l):
        """Level ``l`` node -> level ``l-1`` node id, or -1 for new nodes."""
        n_coarse = self.levels[l - 1].n_nodes
        out = np.full(self.levels[l].n_nodes, -1, dtype=np.int64)
        out[:n_coarse] = np.arange(n_coarse)
        return out

    def descendants(self, l_coarse, l_fine):
        """For each element at ``l_fine``, its ancestor at ``l_coarse``."""
        anc = np.arange(self.levels[l_fine].n_elements)
        for l in range(l_fine, l_coarse, -1):
            anc = self.parent_map[l - 1][anc]
        return anc


def refine(h: MeshHierarchy) -> MeshHierarchy:
    fine, parent, host = refine_mesh(h.finest)
    return MeshHierarchy(h.levels + [fine], h.parent_map + [parent], h.node_host + [host])


def build_hierarchy(case: GeometryCase, n_levels: int) -> MeshHierarchy:
    h = MeshHierarchy([build_case(case)])
    for _ in range(n_levels - 1):
        h = refine(h)
    return h


# --------------------------------------------------------------------------
# VTK legacy export


def write_vtk(path, mesh: Mesh, point_data=None, cell_data=None, coords=None):
    X = mesh.nodes if coords is None else coords
    lines = ["# vtk DataFile Version 3.0", f"fsisolve level {mesh.level}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_nodes} double"]
    lines += [f"{x:.12e} {y:.12e} 0.0" for x, y in X]
    ne = mesh.n_elements
    lines.append(f"CELLS {ne} {10 * ne}")
    lines += ["9 " + " ".join(map(str, conn)) for conn in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["28"] * ne   # VTK_BIQUADRATIC_QUAD
    cell_data = dict(cell_data or {})
    cell_data.setdefault("region", mesh.element_region)
    lines.append(f"CELL_DATA {ne}")
    for name, vals in cell_data.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.12e}" for v in np.asarray(vals, dtype=float)]
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, vals in point_data.items():
            vals = np.asarray(vals, dtype=float)
            if vals.ndim == 2:
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.12e} {b:.12e} 0.0" for a, b in vals]
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.12e}" for v in vals]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
