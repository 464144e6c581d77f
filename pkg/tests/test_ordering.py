import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsisolve.assembly import build_problem, jacobian, rest_state
from fsisolve.constitutive import MaterialParams
from fsisolve.fem import build_layout
from fsisolve.mesh import FLUID, SOLID, GeometryCase, build_case, quad_mesh
from fsisolve.ordering import (ORDERINGS, block_cycle_3_4_5, build_fieldsplit_blocks,
                               build_fieldsplit_sets, build_ordering, build_orderings,
                               build_vanka_blocks, region_patches)


def strip():
    """One fluid quad next to one solid quad."""
    corners = [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]]
    return quad_mesh(np.array(corners) * 1e-3, [FLUID, SOLID], [[0, 1, 4, 3], [1, 2, 5, 4]])


@pytest.fixture(scope="module")
def channel():
    m = build_case(GeometryCase("c", "channel", 6e-3, 1e-3, 0.1e-3, nx=6, ny_fluid=2, ny_wall=1))
    return m, build_layout(m)[1]


def test_j2_is_j1_with_cycled_blocks():
    rows1, cols1 = ORDERINGS["j1"]
    rows2, cols2 = ORDERINGS["j2"]
    assert tuple(block_cycle_3_4_5(rows1)) == rows2
    assert tuple(block_cycle_3_4_5(cols1)) == cols2
    assert block_cycle_3_4_5(range(1, 7)) == [1, 2, 5, 3, 4, 6]


def test_plans_are_permutations(channel):
    m, lay = channel
    x = np.random.default_rng(0).standard_normal(lay.n_dofs)
    for name, plan in build_orderings(lay).items():
        assert np.array_equal(np.sort(plan.row_perm), np.arange(lay.n_dofs))
        assert np.array_equal(np.sort(plan.col_perm), np.arange(lay.n_dofs))
        assert np.array_equal(plan.solution(plan.unknowns(x)), x)
        # block ranges tile [0, n)
        spans = sorted(plan.col_blocks.values())
        assert spans[0][0] == 0 and spans[-1][1] == lay.n_dofs
        assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))


def test_j1_puts_momentum_rows_opposite_displacement(channel):
    m, lay = channel
    plan = build_ordering(lay, "j1")
    assert np.array_equal(plan.row_perm[plan.row_range("S")], lay["us"])
    assert np.array_equal(plan.col_perm[plan.col_range("ds")], lay["ds"])
    # same node and component at matching positions
    assert plan.row_blocks["S"] == plan.col_blocks["ds"]
    assert plan.row_blocks["K"] == plan.col_blocks["us"]


def test_j1_diagonal_nonzero_on_kinematic_blocks():
    m = strip()
    prob = build_problem(m, MaterialParams(), [], supg=False)
    x = rest_state(prob)
    J, _ = jacobian(prob, x, x, 1 / 32, 0.0)
    plan = build_ordering(prob.layout, "j1")
    D = plan.matrix(J).diagonal()
    for eq in ("S", "A", "K", "F"):
        assert np.all(D[plan.row_range(eq)] != 0), eq


def test_vanka_blocks_on_fluid_square():
    m = build_case(GeometryCase("sq", "square", 1.0, nx=2))
    _, lay = build_layout(m)
    plan = build_ordering(lay, "j1")
    blocks = build_vanka_blocks(m, lay, plan, elems_per_block=1)
    assert len(blocks) == 4
    for b in blocks:
        assert b.indices.size == 3 + 9 * 4
        assert b.region == "fluid"
    union = np.unique(np.concatenate([b.indices for b in blocks]))
    assert np.array_equal(union, np.arange(lay.n_dofs))


def test_vanka_single_element_covers_everything():
    m = quad_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [SOLID])
    _, lay = build_layout(m)
    plan = build_ordering(lay, "j1")
    (b,) = build_vanka_blocks(m, lay, plan, 4)
    assert np.array_equal(b.indices, np.arange(lay.n_dofs))


def test_vanka_blocks_respect_regions(channel):
    m, lay = channel
    plan = build_ordering(lay, "j1")
    blocks = build_vanka_blocks(m, lay, plan, 4)
    fields = {f: set(plan.col_positions(lay[f]).tolist()) for f in ("ds", "us", "ps", "df", "uf", "pf")}
    solid_fields = fields["ds"] | fields["us"] | fields["ps"]
    seen_fluid = False
    for b in blocks:
        idx = set(b.indices.tolist())
        if b.region == "solid":
            assert not seen_fluid, "solid blocks come first"
            assert idx <= solid_fields
        else:
            seen_fluid = True
            assert not idx & solid_fields
    union = np.unique(np.concatenate([b.indices for b in blocks]))
    assert np.array_equal(union, np.arange(lay.n_dofs))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 7))
def test_patches_partition_region(epb):
    m = build_case(GeometryCase("c", "channel", 6e-3, 1e-3, 0.1e-3, nx=6, ny_fluid=2, ny_wall=1))
    for region in ("solid", "fluid"):
        patches = region_patches(m, region, epb)
        ids = np.concatenate(patches)
        assert all(p.size <= epb for p in patches)
        assert np.array_equal(np.sort(ids), np.nonzero(m.is_solid() == (region == "solid"))[0])


def test_fieldsplit_groups(channel):
    m, lay = channel
    sets = build_fieldsplit_sets(lay)
    s = lay.sizes()
    assert sets["group1"].size == s["ds"] + s["df"] + s["ps"]
    assert sets["group2"].size == s["us"] + s["uf"] + s["pf"]
    assert set(lay["ps"]) <= set(sets["group1"])
    assert np.array_equal(np.sort(np.concatenate(list(sets.values()))), np.arange(lay.n_dofs))
    plan = build_ordering(lay, "j2")
    fsb = build_fieldsplit_blocks(m, lay, plan, 4, 1)
    g1 = set(fsb.group1.tolist())
    g2 = set(fsb.group2.tolist())
    assert all(set(b.indices.tolist()) <= g1 for b in fsb.as1)
    assert all(set(b.indices.tolist()) <= g2 for b in fsb.as2)
    assert set(fsb.jacobi.tolist()) == set(plan.col_positions(lay["us"]).tolist())
    # in J2 group 1 is a leading contiguous range
    assert np.array_equal(fsb.group1, np.arange(fsb.group1.size))


def test_fieldsplit_solid_only_mesh():
    m = quad_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [SOLID])
    _, lay = build_layout(m)
    sets = build_fieldsplit_sets(lay)
    assert np.array_equal(sets["group2"], np.sort(lay["us"]))


def test_fluid_as1_blocks_overlap(channel):
    m, lay = channel
    plan = build_ordering(lay, "j2")
    wide = build_fieldsplit_blocks(m, lay, plan, 4, overlap=1)
    narrow = build_fieldsplit_blocks(m, lay, plan, 4, overlap=0)
    w = [b for b in wide.as1 if b.region == "fluid"]
    n = [b for b in narrow.as1 if b.region == "fluid"]
    assert len(w) == len(n)
    assert all(set(a.indices) >= set(b.indices) for a, b in zip(w, n))
    assert sum(b.indices.size for b in w) > sum(b.indices.size for b in n)


def test_construction_is_deterministic(channel):
    m, lay = channel
    a = build_vanka_blocks(m, lay, build_ordering(lay, "j1"), 3)
    b = build_vanka_blocks(m, lay, build_ordering(lay, "j1"), 3)
    assert [x.label for x in a] == [y.label for y in b]
    assert all(np.array_equal(x.indices, y.indices) for x, y in zip(a, b))


def test_bad_block_size():
    m = strip()
    with pytest.raises(ValueError):
        region_patches(m, "fluid", 0)
