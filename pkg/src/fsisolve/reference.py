"""Reference square [-1, 1]^2: biquadratic (Q2) Lagrange basis, modal P1 basis, Gauss rules.

Local Q2 node order: corners (-1,-1), (1,-1), (1,1), (-1,1); edge midpoints
(0,-1), (1,0), (0,1), (-1,0); center (0,0).
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

Q2_NODES = np.array([
    [-1, -1], [1, -1], [1, 1], [-1, 1],
    [0, -1], [1, 0], [0, 1], [-1, 0],
    [0, 0],
], dtype=float)

# local edge -> (corner, midpoint, corner), counterclockwise
EDGE_NODES = np.array([[0, 4, 1], [1, 5, 2], [2, 6, 3], [3, 7, 0]])
# outward reference normal per local edge
EDGE_NORMALS = np.array([[0, -1], [1, 0], [0, 1], [-1, 0]], dtype=float)


def _l(s):
    s = np.asarray(s, dtype=float)
    return np.stack([0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)], axis=-1)


def _dl(s):
    s = np.asarray(s, dtype=float)
    return np.stack([s - 0.5, -2.0 * s, s + 0.5], axis=-1)


def _d2l(s):
    s = np.asarray(s, dtype=float)
    one = np.ones_like(s)
    return np.stack([one, -2.0 * one, one], axis=-1)


# 1D index (0: s=-1, 1: s=0, 2: s=1) of each Q2 node per direction
_IX = (Q2_NODES[:, 0] + 1).astype(int)
_IY = (Q2_NODES[:, 1] + 1).astype(int)


def q2_shape(xi, eta):
    """Shape values, shape ``(..., 9)``."""
    return _l(xi)[..., _IX] * _l(eta)[..., _IY]


def q2_grad(xi, eta):
    """Reference gradients, shape ``(..., 9, 2)``."""
    lx, ly = _l(xi), _l(eta)
    dx, dy = _dl(xi), _dl(eta)
    return np.stack([dx[..., _IX] * ly[..., _IY], lx[..., _IX] * dy[..., _IY]], axis=-1)


def q2_hess(xi, eta):
    """Reference second derivatives, shape ``(..., 9, 2, 2)``."""
    lx, ly = _l(xi), _l(eta)
    dx, dy = _dl(xi), _dl(eta)
    ddx, ddy = _d2l(xi), _d2l(eta)
    hxx = ddx[..., _IX] * ly[..., _IY]
    hxy = dx[..., _IX] * dy[..., _IY]
    hyy = lx[..., _IX] * ddy[..., _IY]
    return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


def p1_shape(xi, eta):
    """Modal P1 pressure basis (1, xi, eta), shape ``(..., 3)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.stack([np.ones_like(xi), xi, eta], axis=-1)


@lru_cache(maxsize=None)
def gauss_1d(n):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class ReferenceElement:
    """Tabulated Q2/P1 data on a tensor Gauss rule with ``order`` points per direction."""
    order: int
    points: np.ndarray    # (nq, 2)
    weights: np.ndarray   # (nq,)
    N: np.ndarray         # (nq, 9)
    dN: np.ndarray        # (nq, 9, 2)
    d2N: np.ndarray       # (nq, 9, 2, 2)
    Np: np.ndarray        # (nq, 3)


@lru_cache(maxsize=None)
def reference_element(order=3) -> ReferenceElement:
    s, w = gauss_1d(order)
    xi, eta = np.meshgrid(s, s, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    wts = np.outer(w, w).ravel()
    return ReferenceElement(
        order, np.stack([xi, eta], -1), wts,
        q2_shape(xi, eta), q2_grad(xi, eta), q2_hess(xi, eta), p1_shape(xi, eta),
    )


@lru_cache(maxsize=None)
def edge_rule(order=3):
    """Per local edge: reference points (n, 2) and 1D weights (n,)."""
    s, w = gauss_1d(order)
    pts = []
    for e in range(4):
        if e == 0:
            p = np.stack([s, -np.ones_like(s)], -1)
        elif e == 1:
            p = np.stack([np.ones_like(s), s], -1)
        elif e == 2:
            p = np.stack([-s, np.ones_like(s)], -1)
        else:
            p = np.stack([-np.ones_like(s), -s], -1)
        pts.append(p)
    return np.array(pts), w
