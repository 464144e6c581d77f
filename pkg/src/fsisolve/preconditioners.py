"""Schwarz block smoothers (AS on J1, field split on J2) and damped Richardson.

All operators act on vectors in the ordering of the matrix they were built
from. Block factorizations are computed once per matrix and reused.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SingularBlock
from .linalg import DenseFactorization, dense_lu_factor
from .ordering import FieldSplitBlocks, VankaBlock


@dataclass
class SchwarzBlock:
    indices: np.ndarray
    lu: DenseFactorization
    label: str
    rows: np.ndarray = None          # rows touched by this block's columns
    coupling: sp.csr_matrix = None   # A[rows][:, indices]


def factor_blocks(A, blocks, with_coupling=True):
    A = sp.csr_matrix(A)
    Acsc = A.tocsc() if with_coupling else None
    out = []
    for blk in blocks:
        idx = blk.indices if isinstance(blk, VankaBlock) else np.asarray(blk)
        label = blk.label if isinstance(blk, VankaBlock) else ""
        sub = A[idx][:, idx].toarray()
        lu = dense_lu_factor(sub, label)
        sb = SchwarzBlock(idx, lu, label)
        if with_coupling:
            cols = Acsc[:, idx]
            rows = np.unique(cols.indices)
            sb.rows = rows
            sb.coupling = sp.csr_matrix(cols[rows])
        out.append(sb)
    return out


class SchwarzSweep:
    """One pass over blocks; ``mode`` is "multiplicative" or "additive"."""

    def __init__(self, A, blocks, mode="multiplicative"):
        if mode not in ("multiplicative", "additive"):
            raise ValueError(f"unknown Schwarz mode {mode!r}")
        self.A = sp.csr_matrix(A)
        self.mode = mode
        self.blocks = factor_blocks(self.A, blocks, with_coupling=(mode == "multiplicative"))
        self.n = self.A.shape[0]
        cover = np.zeros(self.n)
        for b in self.blocks:
            cover[b.indices] += 1.0
        self.cover = cover

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        z = np.zeros(self.n)
        if self.mode == "additive":
            for b in self.blocks:
                z[b.indices] += b.lu.solve(r[b.indices])
            covered = self.cover > 0
            z[covered] /= self.cover[covered]
            return z
        res = r.copy()
        for b in self.blocks:
            dz = b.lu.solve(res[b.indices])
            z[b.indices] += dz
            res[b.rows] -= b.coupling @ dz
        return z


def schwarz_apply(sweep: SchwarzSweep, r):
    return sweep(r)


class ASPreconditioner(SchwarzSweep):
    """Locally multiplicative sweep over solid then fluid Vanka blocks of a J1 matrix."""

    def __init__(self, A_j1, blocks):
        super().__init__(A_j1, blocks, "multiplicative")


def lumped_mass(K_block):
    """Row-sum lumping of a (square) mass block."""
    diag = np.asarray(sp.csr_matrix(K_block).sum(axis=1)).ravel()
    if np.any(diag <= 0):
        raise SingularBlock("lumped mass", f"nonpositive entry {diag.min():.3e}")
    return diag


def split_operator(A, group1, group2):
    """P2: A with every entry coupling the two groups removed."""
    A = sp.coo_matrix(A)
    g = np.zeros(A.shape[0], dtype=np.int8)
    g[group2] = 1
    keep = g[A.row] == g[A.col]
    return sp.csr_matrix((A.data[keep], (A.row[keep], A.col[keep])), shape=A.shape)


class FSPreconditioner:
    """Field-split preconditioner on a J2 matrix.

    Group 1 ([d^s, d^f, p^s]) is swept by AS1; group 2 ([u^s, u^f, p^f]) by
    AS2: one Jacobi step on the lumped u^s mass, then fluid [u^f, p^f] blocks.
    Both sweeps act on P2, so no residual moves between the groups.
    """

    def __init__(self, A_j2, fs: FieldSplitBlocks):
        self.n = A_j2.shape[0]
        self.P2 = split_operator(A_j2, fs.group1, fs.group2)
        self.as1 = SchwarzSweep(self.P2, fs.as1, "multiplicative")
        self.jacobi = fs.jacobi
        K = self.P2[fs.jacobi][:, fs.jacobi]
        self.lumped = lumped_mass(K)
        cols = self.P2.tocsc()[:, fs.jacobi]
        self.jac_rows = np.unique(cols.indices)
        self.jac_coupling = sp.csr_matrix(cols[self.jac_rows])
        self.as2 = factor_blocks(self.P2, fs.as2)
        self.group1, self.group2 = fs.group1, fs.group2

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        z = np.zeros(self.n)
        r1 = np.zeros(self.n)
        r1[self.group1] = r[self.group1]
        z[self.group1] = self.as1(r1)[self.group1]
        res = np.zeros(self.n)
        res[self.group2] = r[self.group2]
        zj = res[self.jacobi] / self.lumped
        z[self.jacobi] += zj
        res[self.jac_rows] -= self.jac_coupling @ zj
        for b in self.as2:
            dz = b.lu.solve(res[b.indices])
            z[b.indices] += dz
            res[b.rows] -= b.coupling @ dz
        return z


@dataclass
class RichardsonConfig:
    omega: float = 0.7
    sweeps: int = 1

    def __post_init__(self):
        if not 0 <= self.omega < 2:
            raise ValueError("Richardson damping must lie in [0, 2)")
        if self.sweeps < 0:
            raise ValueError("sweeps must be >= 0")


def richardson_smooth(A, M, x0, b, cfg: RichardsonConfig, sweeps=None):
    x = np.array(x0, dtype=float)
    for _ in range(cfg.sweeps if sweeps is None else sweeps):
        x = x + cfg.omega * M(b - A @ x)
    return x
