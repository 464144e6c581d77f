"""Sparse/dense kernels: CSR helpers, block LU, power method, GMRES, direct solve.

Assembled operators are plain ``scipy.sparse.csr_matrix`` objects kept in
canonical form (sorted column indices, no duplicates).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularBlock

PIVOT_TOL = 1e-14
BREAKDOWN_TOL = 1e-14


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def check_csr(A: sp.csr_matrix):
    """Raise ``ValueError`` if ``A`` violates the canonical CSR invariants."""
    n_rows, n_cols = A.shape
    ptr, idx = A.indptr, A.indices
    if len(ptr) != n_rows + 1 or np.any(np.diff(ptr) < 0):
        raise ValueError("row offsets must be nondecreasing with length n_rows + 1")
    if idx.size and (idx.min() < 0 or idx.max() >= n_cols):
        raise ValueError("column index out of range")
    for r in range(n_rows):
        row = idx[ptr[r]:ptr[r + 1]]
        if np.any(np.diff(row) <= 0):
            raise ValueError(f"row {r}: column indices not strictly increasing")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("non-finite values")


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has {x.shape[0]}")
    return A @ x


@dataclass(frozen=True)
class IndexSet:
    indices: np.ndarray
    label: str = ""

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            idx = np.unique(idx)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.indices.size

    def validate(self, dim):
        if self.indices.size and (self.indices[0] < 0 or self.indices[-1] >= dim):
            raise IndexError(f"index set {self.label!r} out of range for dimension {dim}")


def extract_submatrix(A, rows: IndexSet, cols: IndexSet) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    rows.validate(A.shape[0])
    cols.validate(A.shape[1])
    return as_csr(A[rows.indices][:, cols.indices])


def embed_submatrix(B, rows: IndexSet, cols: IndexSet, shape) -> sp.csr_matrix:
    B = sp.coo_matrix(B)
    return as_csr(sp.coo_matrix((B.data, (rows.indices[B.row], cols.indices[B.col])), shape=shape))


# --------------------------------------------------------------------------
# dense LU


@dataclass
class DenseFactorization:
    dimension: int
    factors: np.ndarray
    pivot: np.ndarray
    label: str = ""

    def solve(self, b):
        return dense_lu_solve(self, b)


def _swaps_to_perm(piv):
    perm = np.arange(piv.size)
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    return perm


def dense_lu_factor(block, label="") -> DenseFactorization:
    """Partial-pivoting LU; pivots below 1e-14 of their row's max raise SingularBlock."""
    a = np.array(block.toarray() if sp.issparse(block) else block, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"block {label!r} is not square: {a.shape}")
    if n == 0:
        return DenseFactorization(0, a, np.zeros(0, dtype=np.int32), label)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    rowmax = np.abs(a[_swaps_to_perm(piv)]).max(axis=1)
    diag = np.abs(np.diag(lu))
    bad = np.nonzero(diag <= PIVOT_TOL * np.maximum(rowmax, np.finfo(float).tiny))[0]
    if bad.size:
        raise SingularBlock(label, f"pivot {bad[0]} = {diag[bad[0]]:.3e}")
    return DenseFactorization(n, lu, piv, label)


def dense_lu_solve(F: DenseFactorization, b):
    if F.dimension == 0:
        return np.zeros(0)
    return sla.lu_solve((F.factors, F.pivot), b, check_finite=False)


# --------------------------------------------------------------------------
# generalized power method


@dataclass
class PowerResult:
    eigenvalue: np.ndarray
    vector: np.ndarray
    converged: np.ndarray
    iterations: int


def power_method_generalized(A, B, tol=1e-8, max_it=1000, x0=None) -> PowerResult:
    """Largest eigenvalue of ``A w = lam B w`` for symmetric A >= 0, B > 0.

    ``A`` and ``B`` may carry leading batch dimensions ``(..., n, n)``; every
    pencil in the batch is iterated until its eigenvalue change and its
    eigen-residual both drop below ``tol`` (relative).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[-1]
    batch = A.shape[:-2]
    if x0 is None:
        w = np.broadcast_to(1.0 + 0.1 * np.arange(n), batch + (n,)).copy()
    else:
        w = np.broadcast_to(np.asarray(x0, dtype=float), batch + (n,)).copy()

    def bnorm(v):
        return np.sqrt(np.einsum("...i,...ij,...j->...", v, B, v))

    w /= bnorm(w)[..., None]
    lam = np.einsum("...i,...ij,...j->...", w, A, w)
    done = np.zeros(batch, dtype=bool)
    it = 0
    for it in range(1, max_it + 1):
        w_new = np.linalg.solve(B, (A @ w[..., None]))[..., 0]
        nrm = bnorm(w_new)
        nrm = np.where(nrm > 0, nrm, 1.0)
        w_new /= nrm[..., None]
        lam_new = np.einsum("...i,...ij,...j->...", w_new, A, w_new)
        Bw = (B @ w_new[..., None])[..., 0]
        res = np.linalg.norm((A @ w_new[..., None])[..., 0] - lam_new[..., None] * Bw, axis=-1)
        scale = np.abs(lam_new) * np.linalg.norm(Bw, axis=-1)
        ok = (np.abs(lam_new - lam) <= tol * np.abs(lam_new)) & (res <= tol * np.maximum(scale, 1e-300))
        w = np.where(done[..., None], w, w_new)
        lam = np.where(done, lam, lam_new)
        done = done | ok
        if np.all(done):
            break
    return PowerResult(lam, w, done, it)


# --------------------------------------------------------------------------
# GMRES


@dataclass
class KrylovConfig:
    restart: int = 60
    max_iters: int = 500
    rel_tol: float = 1e-8
    abs_tol: float = 1e-30

    def __post_init__(self):
        if self.restart < 1 or self.max_iters < 1:
            raise ValueError("restart and max_iters must be >= 1")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class GMRESResult:
    x: np.ndarray
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    breakdown: bool = False
    residual: float = np.nan


def as_apply(op):
    if op is None:
        return lambda v: v
    if callable(op) and not hasattr(op, "shape"):
        return op
    return lambda v: op @ v


def gmres(A, M, b, cfg: KrylovConfig | None = None, x0=None) -> GMRESResult:
    """Right-preconditioned restarted GMRES on ``A M y = b``, ``x = x0 + M y``.

    ``history[0]`` is the true initial residual; later entries are the
    Arnoldi recurrence residuals, which equal the true residual of the
    current iterate up to rounding because the preconditioning is on the right.
    """
    cfg = cfg or KrylovConfig()
    apply_A, apply_M = as_apply(A), as_apply(M)
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    history = [beta]
    target = max(cfg.rel_tol * beta, cfg.abs_tol)
    if beta <= target:
        return GMRESResult(x, history, 0, True, False, beta)

    total = 0
    breakdown = False
    m = cfg.restart
    while total < cfg.max_iters:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = apply_A(apply_M(V[j]))
            wnorm = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w = w - H[i, j] * V[i]
            # one reorthogonalization pass
            for i in range(j + 1):
                c = V[i] @ w
                H[i, j] += c
                w = w - c * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            lucky = H[j + 1, j] <= BREAKDOWN_TOL * max(wnorm, 1e-300)
            if not lucky:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(H[j, j], H[j + 1, j])
            if den == 0.0:
                breakdown = True
                break
            cs[j], sn[j] = H[j, j] / den, H[j + 1, j] / den
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            history.append(abs(g[j + 1]))
            if lucky:
                breakdown = True
                break
            if abs(g[j + 1]) <= target or total >= cfg.max_iters:
                break
        if j_done:
            y = sla.solve_triangular(H[:j_done, :j_done], g[:j_done])
            x = x + apply_M(V[:j_done].T @ y)
        r = b - apply_A(x)
        beta = np.linalg.norm(r)
        if beta <= target:
            return GMRESResult(x, history, total, True, breakdown, beta)
        if breakdown or j_done == 0:
            return GMRESResult(x, history, total, False, True, beta)
        # not converged, or the recurrence drifted from the true residual:
        # restart from the true residual
    return GMRESResult(x, history, total, beta <= target, breakdown, beta)


# --------------------------------------------------------------------------
# sparse direct


class DirectSolver:
    """Sparse LU (SuperLU, threshold partial pivoting) factorized once, applied many times."""

    def __init__(self, A, label="direct"):
        A = sp.csc_matrix(A, dtype=float)
        self.shape = A.shape
        self.label = label
        if A.shape[0] == 0:
            self._lu = None
            return
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spla.MatrixRankWarning)
                self._lu = spla.splu(A, diag_pivot_thresh=1.0)
        except RuntimeError as exc:
            raise SingularBlock(label, str(exc)) from None

    def __call__(self, b):
        if self._lu is None:
            return np.zeros(0)
        x = self._lu.solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SingularBlock(self.label, "non-finite solution")
        return x


def direct_solve(A, b):
    return DirectSolver(A)(b)


# --------------------------------------------------------------------------
# Matrix Market


def write_mtx(path, A):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), field="real", symmetry="general")


def read_mtx(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(str(path)))
