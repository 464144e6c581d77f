"""Kinematics, Mooney-Rivlin and Newtonian stresses, mesh-motion stiffness.

The tensor helpers only use array arithmetic and indexing on 2x2 trailing
axes, so the same code runs on numpy arrays and inside traced jax kernels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ElementInversion
from .mesh import Mesh, element_volume


@dataclass(frozen=True)
class MaterialParams:
    rho_s: float = 1120.0
    rho_f: float = 1035.0
    mu: float = 3.5e-3
    E: float = 1.0e6
    nu: float = 0.5

    def __post_init__(self):
        for name in ("rho_s", "rho_f", "mu", "E"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.nu <= 0.5:
            raise ValueError("Poisson ratio must lie in (0, 0.5]")

    @property
    def G(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def C1(self):
        return self.G / 3.0

    @property
    def C2(self):
        return 0.5 * self.C1

    @property
    def nu_kin(self):
        return self.mu / self.rho_f


def det2(A):
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def adj2(A):
    """Adjugate: inv(A) = adj(A) / det(A)."""
    a, b = A[..., 0, 0], A[..., 0, 1]
    c, d = A[..., 1, 0], A[..., 1, 1]
    row0 = _stack2(d, -b)
    row1 = _stack2(-c, a)
    return _stack2(row0, row1, axis=-2)


def inv2(A):
    return adj2(A) / det2(A)[..., None, None]


def _stack2(a, b, axis=-1):
    mod = _module(a)
    return mod.stack([a, b], axis=axis)


def _module(x):
    if type(x).__module__.startswith("jax"):
        import jax.numpy as jnp
        return jnp
    return np


def _scalar_field(p):
    return p[..., None, None] if np.ndim(p) else p


def transpose2(A):
    return A.swapaxes(-1, -2)


def eye2(like):
    mod = _module(like)
    return mod.zeros_like(like) + mod.eye(2)


@dataclass
class DeformationState:
    F: np.ndarray
    J: np.ndarray
    B: np.ndarray


def deformation(grad_d) -> DeformationState:
    grad_d = np.asarray(grad_d, dtype=float)
    F = np.eye(2) + grad_d
    J = det2(F)
    if np.any(J <= 0):
        raise ElementInversion(-1, float(np.min(J)))
    return DeformationState(F, J, F @ transpose2(F))


def mooney_rivlin_stress(B, p, C1, C2):
    """Cauchy stress -p I + 2 C1 B - 2 C2 B^-1."""
    return -_scalar_field(p) * eye2(B) + 2.0 * C1 * B - 2.0 * C2 * inv2(B)


def mooney_rivlin_elastic_pk1(F, C1, C2):
    """First Piola-Kirchhoff stress of the elastic part, J (2 C1 B - 2 C2 B^-1) F^-T."""
    J = det2(F)
    B = F @ transpose2(F)
    sigma = 2.0 * C1 * B - 2.0 * C2 * inv2(B)
    return J[..., None, None] * sigma @ transpose2(inv2(F))


def pressure_pk1(F, p):
    """Pressure part of the first Piola-Kirchhoff stress, -p J F^-T = -p cof(F)."""
    return -_scalar_field(p) * transpose2(adj2(F))


def newtonian_stress(grad_u, p, mu):
    return -_scalar_field(p) * eye2(grad_u) + mu * (grad_u + transpose2(grad_u))


def mesh_stiffness_inverse_volume(mesh: Mesh, e: int, coords=None) -> float:
    return 1.0 / element_volume(mesh, e, coords)


def mesh_stiffness_distance(x, m, a=1.0, c=1.0e4):
    """a / (1 + c * |x - m|), evaluated at reference point(s) ``x``."""
    if a < 1 or c < 1:
        raise ValueError("distance stiffness expects a >= 1 and c >= 1")
    dist = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(m, dtype=float), axis=-1)
    return a / (1.0 + c * dist)
