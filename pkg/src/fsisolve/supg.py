"""Streamline-upwind stabilization: element eigenvalue estimate, Re_k, xi, tau, SUPG test function.

The inverse-estimate constant of each fluid element comes from the largest
eigenvalue of

    (div(grad w + grad w^T), div(grad phi + grad phi^T)) = lam (grad w, grad phi)

over Q2 fields vanishing on the element boundary. On a quadrilateral that
space is spanned by the interior bubble times the two unit vectors, so every
pencil is 2x2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvertedElement
from .linalg import power_method_generalized
from .mesh import Mesh
from .reference import reference_element

BUBBLE = 8   # local index of the interior Q2 node
EIG_ORDER = 4


def physical_derivatives(X, dN, d2N, xp=np):
    """Physical gradients/Hessians of the 9 shape functions at each point.

    ``X``: (..., 9, 2) node coordinates; ``dN``: (q, 9, 2); ``d2N``: (q, 9, 2, 2).
    Returns gradN (..., q, 9, 2), hessN (..., q, 9, 2, 2) and det (..., q).
    Uses  H_x = G^-T (H_xi - sum_c dN/dx_c H_xi x_c) G^-1  with G = dx/dxi.
    """
    G = xp.einsum("...ka,qkb->...qab", X, dN)
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    Ginv = xp.stack([xp.stack([G[..., 1, 1], -G[..., 0, 1]], -1),
                     xp.stack([-G[..., 1, 0], G[..., 0, 0]], -1)], -2) / det[..., None, None]
    gradN = xp.einsum("qkb,...qba->...qka", dN, Ginv)
    Hx = xp.einsum("...kc,qkij->...qcij", X, d2N)          # second derivatives of geometry
    H = d2N - xp.einsum("...qkc,...qcij->...qkij", gradN, Hx)
    hessN = xp.einsum("...qia,...qkij,...qjb->...qkab", Ginv, H, Ginv)
    return gradN, hessN, det


def bubble_pencil(X, order=EIG_ORDER):
    """(A, B) 2x2 pencils for element coordinates ``X`` of shape (ne, 9, 2)."""
    ref = reference_element(order)
    X = np.asarray(X, dtype=float)
    gradN, hessN, det = physical_derivatives(X, ref.dN, ref.d2N)
    if np.any(det <= 0):
        e = int(np.nonzero(det.min(axis=-1) <= 0)[0][0])
        raise InvertedElement(e, float(det[e].min()))
    w = det * ref.weights
    gb = gradN[..., BUBBLE, :]            # (ne, q, 2)
    Hb = hessN[..., BUBBLE, :, :]         # (ne, q, 2, 2)
    lap = Hb[..., 0, 0] + Hb[..., 1, 1]
    # column a: div(grad w + grad w^T) for w = b e_a, component c = lap delta_ca + H_ca
    V = lap[..., None, None] * np.eye(2) + Hb
    A = np.einsum("eqca,eqcb,eq->eab", V, V, w)
    B = np.einsum("eqc,eqc,eq->e", gb, gb, w)[:, None, None] * np.eye(2)
    return A, B


@dataclass
class StabilizationState:
    lam: np.ndarray          # per element (zero for solid elements)
    converged: np.ndarray    # power-method convergence flags
    vectors: np.ndarray      # cached eigenvectors (ne, 2)


def element_lambdas(X, tol=1e-8, max_it=1000, dense=False):
    """Largest generalized eigenvalue per element; power method with dense fallback."""
    A, B = bubble_pencil(X)
    if dense:
        lam = np.array([sla.eigh(a, b, eigvals_only=True)[-1] for a, b in zip(A, B)])
        return lam, np.ones(lam.size, dtype=bool), np.zeros((lam.size, 2))
    res = power_method_generalized(A, B, tol=tol, max_it=max_it)
    lam = np.array(res.eigenvalue, dtype=float)
    bad = np.nonzero(~res.converged)[0]
    for e in bad:
        lam[e] = sla.eigh(A[e], B[e], eigvals_only=True)[-1]
    return lam, res.converged, res.vector


def element_lambda(mesh: Mesh, e: int, coords=None, dense=False):
    X = (mesh.nodes if coords is None else coords)[mesh.elements[[e]]]
    return float(element_lambdas(X, dense=dense)[0][0])


def stabilization_state(mesh: Mesh, coords=None) -> StabilizationState:
    X = (mesh.nodes if coords is None else coords)[mesh.elements]
    fluid = ~mesh.is_solid()
    lam = np.zeros(mesh.n_elements)
    conv = np.ones(mesh.n_elements, dtype=bool)
    vec = np.zeros((mesh.n_elements, 2))
    if fluid.any():
        lam[fluid], conv[fluid], vec[fluid] = element_lambdas(X[fluid])
    return StabilizationState(lam, conv, vec)


def xi(Re):
    if Re < 0:
        raise ValueError("element Reynolds number must be nonnegative")
    return Re if Re < 1.0 else 1.0


def element_reynolds(speed, lam, nu_kin):
    return speed / (4.0 * np.sqrt(lam) * nu_kin)


def tau(u, lam, nu_kin):
    """Stabilization time scale at one point; returns the diffusive limit for u = 0."""
    speed = float(np.linalg.norm(u))
    Re = element_reynolds(speed, lam, nu_kin)
    if Re < 1.0:
        return 1.0 / (4.0 * lam * nu_kin)
    return xi(Re) / (np.sqrt(lam) * speed)


def tau_array(u, lam, nu_kin, xp=np):
    """Vectorized tau over trailing velocity axis; differentiable in u (safe norm at 0)."""
    s2 = xp.sum(u * u, axis=-1)
    positive = s2 > 0
    speed = xp.where(positive, xp.sqrt(xp.where(positive, s2, 1.0)), 0.0)
    diffusive = 1.0 / (4.0 * lam * nu_kin)
    Re = speed / (4.0 * xp.sqrt(lam) * nu_kin)
    safe = xp.where(Re >= 1.0, speed, 1.0)
    return xp.where(Re < 1.0, diffusive, 1.0 / (xp.sqrt(lam) * safe))


def supg_test(u, ddot, grad_phi, tau_value, rho_f):
    """tau * rho_f * ((u - ddot) . grad) phi for a scalar shape function gradient."""
    return tau_value * rho_f * (np.asarray(u) - np.asarray(ddot)) @ np.asarray(grad_phi)
