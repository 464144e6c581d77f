import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsisolve.errors import InvertedElement
from fsisolve.mesh import (FLUID, SOLID, GeometryCase, build_case, build_hierarchy,
                           cavity_elements, check_mesh, element_volume, element_volumes,
                           quad_mesh, refine_mesh, write_vtk)

CHANNEL = GeometryCase("channel", "channel", 10e-3, 2e-3, 0.25e-3, nx=8, ny_fluid=2, ny_wall=1)


def test_element_volume_examples():
    unit = quad_mesh([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert element_volume(unit, 0) == pytest.approx(1.0, abs=1e-14)
    rect = quad_mesh([[0, 0], [2, 0], [2, 1], [0, 1]])
    assert element_volume(rect, 0) == pytest.approx(2.0, abs=1e-14)
    trap = quad_mesh([[0, 0], [2, 0], [1.5, 1], [0.5, 1]])
    shoelace = 0.5 * abs(sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in
                             zip([(0, 0), (2, 0), (1.5, 1), (0.5, 1)],
                                 [(2, 0), (1.5, 1), (0.5, 1), (0, 0)])))
    assert shoelace == 1.5
    assert element_volume(trap, 0) == pytest.approx(1.5, abs=1e-14)


def test_inverted_element_reports_id():
    m = quad_mesh([[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1]], quads=[[0, 1, 2, 3], [1, 4, 5, 2]])
    coords = m.nodes.copy()
    coords[4] = [0.2, 0.0]          # fold the second element
    coords[m.elements[1, 4]] = 0.5 * (coords[1] + coords[4])
    with pytest.raises(InvertedElement) as exc:
        element_volumes(m, coords=coords)
    assert exc.value.element == 1
    with pytest.raises(InvertedElement):
        element_volume(m, 1, coords=coords)


def test_channel_audit():
    m = build_case(CHANNEL)
    assert check_mesh(m)
    assert sorted(m.groups_with_role("inlet") + m.groups_with_role("outlet")) == ["inlet", "outlet"]
    assert m.group_nodes("inlet").size == 2 * CHANNEL.ny_fluid + 1
    area = element_volumes(m)
    fluid = m.element_region == FLUID
    assert area[fluid].sum() == pytest.approx(10e-3 * 2e-3, rel=1e-12)
    assert area[~fluid].sum() == pytest.approx(2 * 10e-3 * 0.25e-3, rel=1e-12)
    # each boundary face tagged once
    keys = {(int(e), int(le)) for e, le, _ in m.boundary_faces}
    assert len(keys) == len(m.boundary_faces)


def test_channel_rejects_degenerate():
    with pytest.raises(ValueError):
        build_case(GeometryCase("c", "channel", 10e-3, 2e-3, 2e-3))
    with pytest.raises(ValueError):
        build_case(GeometryCase("c", "channel", 0.0, 2e-3, 0.1e-3))


def test_unit_square():
    m = build_case(GeometryCase("sq", "square", 1.0, nx=3))
    assert m.n_elements == 9 and len(m.groups) == 4
    assert np.all(m.element_region == FLUID)
    assert element_volumes(m).sum() == pytest.approx(1.0, abs=1e-14)


def test_zero_bulge_is_straight_channel():
    a = build_case(CHANNEL)
    b = build_case(GeometryCase("aneurysm", "channel", 10e-3, 2e-3, 0.25e-3, 0.0, 5e-3, 8, 2, 1))
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.elements, b.elements)


def test_bulge_grows_fluid_area():
    case = GeometryCase("aneurysm", "channel", 10e-3, 2e-3, 0.25e-3, 2e-3, 5e-3, 8, 2, 1)
    m = build_case(case)
    fluid = m.element_region == FLUID
    assert element_volumes(m)[fluid].sum() > 10e-3 * 2e-3
    cav = cavity_elements(m, case)
    assert cav.size > 0 and np.all(m.element_region[cav] == FLUID)


def test_refine_single_quad():
    m = quad_mesh([[0, 0], [1, 0], [1, 1], [0, 1]])
    fine, parent, host = refine_mesh(m)
    assert fine.n_elements == 4
    assert fine.n_vertices == 9
    assert np.array_equal(parent, np.zeros(4))
    assert len(fine.boundary_faces) == 8


def test_channel_refined_four_times():
    h = build_hierarchy(CHANNEL, 5)
    assert h.finest.n_elements == 256 * h.levels[0].n_elements
    for l in range(1, 5):
        coarse, fine = h.levels[l - 1], h.levels[l]
        assert (fine.element_region == FLUID).sum() == 4 * (coarse.element_region == FLUID).sum()
        assert np.array_equal(fine.element_region, coarse.element_region[h.parent_map[l - 1]])
        assert len(fine.boundary_faces) == 2 * len(coarse.boundary_faces)


@pytest.mark.parametrize("bulge", [0.0, 2e-3])
def test_refinement_preserves_region_area(bulge):
    case = GeometryCase("c", "channel", 10e-3, 2e-3, 0.25e-3, bulge, 5e-3, 6, 2, 1)
    h = build_hierarchy(case, 3)
    areas = []
    for m in h.levels:
        v = element_volumes(m)
        areas.append([v[m.element_region == r].sum() for r in (FLUID, SOLID)])
    # holds for the curved (isoparametric) bulge too: the fine maps reuse the parent's
    assert np.allclose(areas, areas[0], rtol=1e-12, atol=0)


def test_fine_nodes_are_coarse_nodes_or_midpoints():
    h = build_hierarchy(CHANNEL, 2)
    coarse, fine = h.levels
    origin = h.node_origin(1)
    old = origin >= 0
    assert np.array_equal(fine.nodes[old], coarse.nodes[origin[old]])
    # straight-sided channel: new nodes sit at midpoints of coarse Q2 node pairs
    # along edges, or at quarter points of the element in reference coordinates
    host = h.node_host[0]
    assert np.all(np.isin(np.round(np.abs(host[:, 1:]), 12), [0.0, 0.5, 1.0]))


def test_interface_nodes_map_into_fine_interface():
    from fsisolve.fem import build_layout
    h = build_hierarchy(CHANNEL, 2)
    _, lc = build_layout(h.levels[0])
    _, lf = build_layout(h.levels[1])
    origin = h.node_origin(1)
    fine_of_coarse = np.nonzero(origin >= 0)[0]
    mapped = fine_of_coarse[np.isin(origin[fine_of_coarse], lc.interface_nodes)]
    assert np.all(np.isin(mapped, lf.interface_nodes))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.5, 3.0), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_affine_refinement_area_exact(w, h_, sx, sy):
    m = quad_mesh([[0, 0], [w, sy], [w + sx, h_ + sy], [sx, h_]])
    fine, _, _ = refine_mesh(m)
    assert element_volumes(fine).sum() == pytest.approx(element_volumes(m).sum(), rel=1e-12)


def test_write_vtk(tmp_path):
    m = quad_mesh([[0, 0], [1, 0], [1, 1], [0, 1]])
    p = tmp_path / "m.vtk"
    write_vtk(p, m, {"velocity": np.zeros((m.n_nodes, 2))}, {"pressure": np.ones(1)})
    text = p.read_text()
    assert text.startswith("# vtk DataFile Version")
    assert "UNSTRUCTURED_GRID" in text and "pressure" in text
