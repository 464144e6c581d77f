import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import perturbed_state
from fsisolve.assembly import build_problem, jacobian
from fsisolve.bench import setup_case
from fsisolve.config import RunConfig
from fsisolve.constitutive import MaterialParams
from fsisolve.errors import SingularBlock
from fsisolve.fem import scalar_matrices
from fsisolve.mesh import SOLID, quad_mesh
from fsisolve.ordering import build_fieldsplit_blocks, build_ordering, build_vanka_blocks
from fsisolve.preconditioners import (ASPreconditioner, FSPreconditioner, RichardsonConfig,
                                      SchwarzSweep, lumped_mass, richardson_smooth,
                                      split_operator)
from schwarz_reference import additive_schwarz, field_split, multiplicative_schwarz

DT = 1 / 32


@pytest.fixture(scope="module")
def small_system():
    setup = setup_case(RunConfig(case="channel", levels=2, nx=4))
    prob = setup.problem
    rng = np.random.default_rng(4)
    x_old = perturbed_state(prob, rng)
    x = perturbed_state(prob, rng)
    J, _ = jacobian(prob, x, x_old, DT, 0.25)
    return prob, J


def test_single_block_is_exact():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 6)) + 6 * np.eye(6)
    r = rng.standard_normal(6)
    for mode in ("multiplicative", "additive"):
        z = SchwarzSweep(sp.csr_matrix(A), [np.arange(6)], mode)(r)
        assert np.allclose(A @ z, r, atol=1e-12)


def test_block_diagonal_additive_is_exact():
    A = sp.block_diag([np.array([[4.0, 1], [2, 3]]), np.array([[5.0]]), np.array([[2.0, -1], [1, 2]])]).tocsr()
    r = np.arange(1.0, 6.0)
    z = SchwarzSweep(A, [[0, 1], [2], [3, 4]], "additive")(r)
    assert np.allclose(A @ z, r, atol=1e-14)


def test_overlapping_additive_averages():
    D = sp.diags([2.0, 4.0, 8.0]).tocsr()
    r = np.array([2.0, 4.0, 8.0])
    z = SchwarzSweep(D, [[0, 1], [1, 2]], "additive")(r)
    assert np.allclose(z, 1.0)


def test_additive_matches_reference():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((10, 10)) + 10 * np.eye(10)
    blocks = [np.arange(0, 4), np.arange(3, 8), np.arange(6, 10)]
    r = rng.standard_normal(10)
    z = SchwarzSweep(sp.csr_matrix(A), blocks, "additive")(r)
    assert np.allclose(z, additive_schwarz(A, blocks, r), rtol=1e-13, atol=1e-15)


def test_multiplicative_is_block_gauss_seidel():
    A = np.array([[4.0, 1.0], [2.0, 5.0]])
    r = np.array([1.0, 3.0])
    z = SchwarzSweep(sp.csr_matrix(A), [[0], [1]], "multiplicative")(r)
    z0 = r[0] / 4.0
    z1 = (r[1] - 2.0 * z0) / 5.0
    assert np.allclose(z, [z0, z1], rtol=1e-15)


@settings(max_examples=25, deadline=None)
@given(arrays(float, 8, elements=st.floats(-10, 10)), arrays(float, 8, elements=st.floats(-10, 10)),
       st.floats(-3, 3))
def test_schwarz_is_linear(r1, r2, a):
    rng = np.random.default_rng(1)
    A = sp.csr_matrix(rng.standard_normal((8, 8)) + 8 * np.eye(8))
    for mode in ("multiplicative", "additive"):
        S = SchwarzSweep(A, [[0, 1, 2], [2, 3, 4, 5], [5, 6, 7]], mode)
        lhs = S(a * r1 + r2)
        rhs = a * S(r1) + S(r2)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_as_matches_reference(small_system):
    prob, J = small_system
    plan = build_ordering(prob.layout, "j1")
    A = plan.matrix(J)
    blocks = build_vanka_blocks(prob.mesh, prob.layout, plan, 4)
    M = ASPreconditioner(A, blocks)
    r = np.random.default_rng(5).standard_normal(A.shape[0])
    z_ref = multiplicative_schwarz(A.toarray(), [b.indices for b in blocks], r)
    assert np.abs(M(r) - z_ref).max() <= 1e-12 * np.abs(z_ref).max()


def test_fs_matches_reference(small_system):
    prob, J = small_system
    plan = build_ordering(prob.layout, "j2")
    A = plan.matrix(J)
    fs = build_fieldsplit_blocks(prob.mesh, prob.layout, plan, 4, 1)
    M = FSPreconditioner(A, fs)
    r = np.random.default_rng(6).standard_normal(A.shape[0])
    z_ref = field_split(A.toarray(), fs.group1, fs.group2, [b.indices for b in fs.as1],
                        fs.jacobi, [b.indices for b in fs.as2], r)
    assert np.abs(M(r) - z_ref).max() <= 1e-12 * np.abs(z_ref).max()


def test_fs_never_crosses_groups(small_system):
    prob, J = small_system
    plan = build_ordering(prob.layout, "j2")
    A = plan.matrix(J)
    fs = build_fieldsplit_blocks(prob.mesh, prob.layout, plan, 4, 1)
    M = FSPreconditioner(A, fs)
    rng = np.random.default_rng(7)
    r = rng.standard_normal(A.shape[0])
    r1 = r.copy()
    r1[fs.group2] = 0
    z = M(r1)
    assert np.all(z[fs.group2] == 0)
    r2 = r.copy()
    r2[fs.group1] = 0
    assert np.all(M(r2)[fs.group1] == 0)
    # P2 keeps the in-group blocks untouched
    P2 = M.P2.toarray()
    Ad = A.toarray()
    g1, g2 = fs.group1, fs.group2
    assert np.array_equal(P2[np.ix_(g1, g1)], Ad[np.ix_(g1, g1)])
    assert not P2[np.ix_(g1, g2)].any() and not P2[np.ix_(g2, g1)].any()


def test_split_operator_decoupled_case():
    A = sp.csr_matrix(np.array([[1.0, 2, 3], [4, 5, 6], [7, 8, 9]]))
    P2 = split_operator(A, [0, 2], [1]).toarray()
    assert np.array_equal(P2, [[1, 0, 3], [0, 5, 0], [7, 0, 9]])


def test_lumped_mass_of_solid_patch():
    corners = np.array([[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1.5]]) * 1e-3
    m = quad_mesh(corners, [SOLID, SOLID], [[0, 1, 4, 3], [1, 2, 5, 4]])
    for rho in (1120.0, 2240.0):
        prob = build_problem(m, MaterialParams(rho_s=rho), [])
        x = np.zeros(prob.n_dofs)
        x[prob.layout["ps"][0::3]] = prob.params.C1
        J, _ = jacobian(prob, x, x, DT, 0.0)
        plan = build_ordering(prob.layout, "j2")
        fs = build_fieldsplit_blocks(m, prob.layout, plan, 4, 1)
        A = split_operator(plan.matrix(J), fs.group1, fs.group2)
        lumped = lumped_mass(A[fs.jacobi][:, fs.jacobi])
        area = 1e-6 + 0.5 * (1e-3 * (1e-3 + 1.5e-3))
        assert lumped.sum() == pytest.approx(2 * rho * area, rel=1e-12)
        _, M = scalar_matrices(m)
        row = np.asarray(M.sum(axis=1)).ravel()
        assert np.allclose(lumped, rho * np.repeat(row, 2), rtol=1e-12)


def test_lumped_mass_rejects_nonpositive():
    with pytest.raises(SingularBlock):
        lumped_mass(sp.csr_matrix(np.array([[1.0, -2.0], [0.0, 1.0]])))


def test_richardson():
    A = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    b = np.array([1.0, 2.0])
    x0 = np.array([0.5, -0.5])
    inv = np.linalg.inv(A.toarray())
    exact = lambda r: inv @ r
    assert np.array_equal(richardson_smooth(A, exact, x0, b, RichardsonConfig(0.0, 3)), x0)
    assert np.allclose(richardson_smooth(A, exact, x0, b, RichardsonConfig(1.0, 1)), [1 / 11, 7 / 11])
    jac = lambda r: r / np.array([4.0, 3.0])
    x = richardson_smooth(A, jac, x0, b, RichardsonConfig(0.5, 1))
    r = b - A @ x0
    assert np.allclose(x, x0 + 0.5 * r / [4.0, 3.0])
    with pytest.raises(ValueError):
        RichardsonConfig(omega=2.0)


@pytest.mark.parametrize("kind", ["as", "fs"])
def test_one_application_reduces_residual(small_system, kind):
    prob, J = small_system
    plan = build_ordering(prob.layout, "j1" if kind == "as" else "j2")
    A = plan.matrix(J)
    if kind == "as":
        M = ASPreconditioner(A, build_vanka_blocks(prob.mesh, prob.layout, plan, 4))
    else:
        M = FSPreconditioner(A, build_fieldsplit_blocks(prob.mesh, prob.layout, plan, 4, 1))
    b = A @ np.random.default_rng(8).standard_normal(A.shape[0])
    x = richardson_smooth(A, M, np.zeros_like(b), b, RichardsonConfig())
    assert np.linalg.norm(b - A @ x) < np.linalg.norm(b)
