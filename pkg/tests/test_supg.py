import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from fsisolve.mesh import quad_mesh
from fsisolve.supg import (bubble_pencil, element_lambda, element_lambdas, element_reynolds,
                           supg_test, tau, tau_array, xi)

NU = 3.5e-3 / 1035.0


def random_quads(n, seed):
    """Element coordinates (n, 9, 2) of random convex bilinear quads."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        base = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        c = base + 0.2 * rng.uniform(-1, 1, (4, 2))
        c *= rng.uniform(1e-4, 1e-2)
        out.append(quad_mesh(c).nodes[quad_mesh(c).elements[0]])
    return np.array(out)


def test_power_method_matches_dense_on_random_elements():
    X = random_quads(25, 3)
    lam_pm, conv, _ = element_lambdas(X)
    A, B = bubble_pencil(X)
    dense = np.array([sla.eigh(a, b, eigvals_only=True)[-1] for a, b in zip(A, B)])
    assert conv.all()
    assert np.abs(lam_pm - dense).max() / dense.max() <= 1e-6
    assert np.all(np.abs(lam_pm - dense) <= 1e-6 * dense)


def test_lambda_scales_with_inverse_square_size():
    big = quad_mesh([[0, 0], [2e-3, 0], [2.3e-3, 1.5e-3], [0.1e-3, 1.2e-3]])
    small = quad_mesh(big.nodes[:4] * 0.5)
    l1 = element_lambda(big, 0, dense=True)
    l2 = element_lambda(small, 0, dense=True)
    assert l2 / l1 == pytest.approx(4.0, rel=1e-6)
    assert element_lambda(big, 0) == pytest.approx(l1, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(-1, 1), st.floats(-1, 1))
def test_lambda_h2_invariant_under_similarity(h, tx, ty):
    ref = quad_mesh([[0, 0], [1, 0], [1.2, 0.9], [0.1, 0.8]])
    c0 = element_lambda(ref, 0, dense=True)
    moved = quad_mesh(h * ref.nodes[:4] + [tx, ty])
    assert element_lambda(moved, 0, dense=True) * h ** 2 == pytest.approx(c0, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_lambda_translation_invariant(tx, ty):
    ref = quad_mesh([[0, 0], [1, 0], [1.2, 0.9], [0.1, 0.8]])
    l0 = element_lambda(ref, 0)
    moved = quad_mesh(ref.nodes[:4] + [tx, ty])
    assert element_lambda(moved, 0) == pytest.approx(l0, rel=1e-10)


def test_xi_branches():
    assert xi(0.5) == 0.5
    assert xi(0.0) == 0.0
    assert xi(10.0) == 1.0
    with pytest.raises(ValueError):
        xi(-1.0)


def test_tau_branches_and_continuity():
    lam = 3.0e6
    diffusive = 1.0 / (4 * lam * NU)
    for s in (0.0, 1e-6, 1e-4):
        if element_reynolds(s, lam, NU) < 1:
            assert tau(np.array([s, 0.0]), lam, NU) == pytest.approx(diffusive, rel=1e-15)
    s = 0.5
    assert element_reynolds(s, lam, NU) >= 1
    assert tau(np.array([0.0, s]), lam, NU) == pytest.approx(1.0 / (np.sqrt(lam) * s))
    # Re = 1 exactly: both branch formulas agree
    s1 = 4 * np.sqrt(lam) * NU
    assert element_reynolds(s1, lam, NU) == pytest.approx(1.0)
    a = 1.0 / (4 * lam * NU)
    b = 1.0 / (np.sqrt(lam) * s1)
    assert a == pytest.approx(b, rel=1e-15)
    assert tau(np.array([s1, 0.0]), lam, NU) == pytest.approx(a, rel=1e-15)
    assert float(tau_array(np.array([s1, 0.0]), lam, NU)) == pytest.approx(a, rel=1e-15)


def test_tau_uses_euclidean_speed():
    lam = 1e6
    u = np.array([3.0, 4.0])
    assert tau(u, lam, NU) == pytest.approx(1.0 / (np.sqrt(lam) * 5.0))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e2, 1e8), st.floats(1e-4, 1e2), st.floats(1.0, 50.0))
def test_tau_nonincreasing_in_speed(lam, s, alpha):
    u = np.array([s, 0.0])
    assert tau(alpha * u, lam, NU) <= tau(u, lam, NU) * (1 + 1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=2), st.floats(1e2, 1e8))
def test_tau_array_matches_scalar(u, lam):
    u = np.array(u)
    assert float(tau_array(u, lam, NU)) == pytest.approx(tau(u, lam, NU), rel=1e-14)


def test_supg_test_function():
    rho = 1035.0
    u = np.array([0.3, -0.1])
    assert supg_test(u, u, np.array([2.0, 5.0]), 0.01, rho) == 0.0
    a, b, t = 2.0, -3.0, 0.004
    assert supg_test(np.array([1.0, 0.0]), np.zeros(2), np.array([a, b]), t, rho) == pytest.approx(t * rho * a)
    assert supg_test(u, np.zeros(2), np.array([a, b]), 0.0, rho) == 0.0
