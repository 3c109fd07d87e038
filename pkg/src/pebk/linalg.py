"""Dense and sparse linear algebra kernels.

Everything here is a pure function of its inputs.  ``SparseOperator`` and
``ShiftedFactorization`` are immutable once built and may be shared between
threads for concurrent reads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Literal

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg.lapack import dgttrf, dgttrs

StructureHint = Literal["general", "tridiagonal_periodic"]


class DimensionError(ValueError):
    pass


class SingularOperatorError(ArithmeticError):
    """Raised when a factorization meets an exactly singular pivot."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"singular pivot at index {pivot}")


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Square CSR matrix with a structure hint used to pick a solver."""

    matrix: sp.csr_matrix
    structure_hint: StructureHint = "general"

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=float)
        m.sum_duplicates()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got {m.shape}")
        if not np.all(np.isfinite(m.data)):
            raise ValueError("operator has non-finite entries")
        if self.structure_hint not in ("general", "tridiagonal_periodic"):
            raise ValueError(f"unknown structure hint {self.structure_hint!r}")
        if self.structure_hint == "tridiagonal_periodic" and not _is_periodic_tridiagonal(m):
            raise ValueError("entries outside the periodic tridiagonal pattern")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_csr(cls, n, row_offsets, col_indices, values, structure_hint="general"):
        row_offsets = np.asarray(row_offsets)
        if len(row_offsets) != n + 1 or np.any(np.diff(row_offsets) < 0):
            raise ValueError("row_offsets must have length n+1 and be nondecreasing")
        col_indices = np.asarray(col_indices)
        if col_indices.size and (col_indices.min() < 0 or col_indices.max() >= n):
            raise ValueError("column index out of range")
        m = sp.csr_matrix((np.asarray(values, float), col_indices, row_offsets), shape=(n, n))
        return cls(m, structure_hint)

    @classmethod
    def zeros(cls, n, structure_hint: StructureHint = "general"):
        return cls(sp.csr_matrix((n, n)), structure_hint)

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, format="csr"), "general")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, x):
        return matvec(self, x)

    def __add__(self, other: SparseOperator) -> SparseOperator:
        hint = (
            "tridiagonal_periodic"
            if self.structure_hint == other.structure_hint == "tridiagonal_periodic"
            else "general"
        )
        return SparseOperator(self.matrix + other.matrix, hint)

    def scaled(self, c: float) -> SparseOperator:
        return SparseOperator(c * self.matrix, self.structure_hint)


def _is_periodic_tridiagonal(m: sp.csr_matrix) -> bool:
    n = m.shape[0]
    coo = m.tocoo()
    d = (coo.col - coo.row) % n
    return bool(np.all((d == 0) | (d == 1) | (d == n - 1)))


def matvec(A: SparseOperator, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.n:
        raise DimensionError(f"operator has dimension {A.n}, vector has {x.shape[0]}")
    return A.matrix @ x


@dataclass(frozen=True, eq=False)
class ShiftedFactorization:
    """Reusable factorization of ``I - gamma*A``."""

    base: SparseOperator
    gamma: float
    _solver: object = field(repr=False)

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.base.n:
            raise DimensionError(f"rhs has {b.shape[0]} rows, operator has {self.base.n}")
        return self._solver(b)

    def apply(self, x) -> np.ndarray:
        """Multiply by ``I - gamma*A`` (the forward operator)."""
        x = np.asarray(x, dtype=float)
        return x - self.gamma * (self.base.matrix @ x)


def factor_shifted(A: SparseOperator, gamma: float) -> ShiftedFactorization:
    if not gamma > 0:
        raise ValueError(f"shift must be positive, got {gamma}")
    M = (sp.identity(A.n, format="csr") - gamma * A.matrix).tocsr()
    solver = None
    if A.structure_hint == "tridiagonal_periodic" and A.n >= 3:
        solver = _checked(_cyclic_tridiagonal_solver, M)
    if solver is None:
        solver = _sparse_lu_solver(M)
    return ShiftedFactorization(A, float(gamma), solver)


def _checked(build, M, rtol=1e-10):
    """``build(M)`` if its solve passes a backward-error probe, else ``None``.

    The corner splitting can be ill-conditioned (or singular) even when
    ``M`` is not; the general sparse LU then takes over.
    """
    try:
        solve = build(M)
    except SingularOperatorError:
        return None
    b = np.cos(np.arange(M.shape[0]) * 0.7 + 0.3)
    x = solve(b)
    scale = abs(M).max() * np.abs(x).max() + np.abs(b).max()
    if not np.all(np.isfinite(x)) or np.abs(M @ x - b).max() > rtol * scale:
        return None
    return solve


def _cyclic_tridiagonal_solver(M: sp.csr_matrix):
    # banded LU with partial pivoting plus a Sherman-Morrison update for the corners
    n = M.shape[0]
    diag = M.diagonal(0).astype(float)
    lower = M.diagonal(-1).astype(float)
    upper = M.diagonal(1).astype(float)
    beta = float(M[0, n - 1])
    alpha = float(M[n - 1, 0])

    corner = beta != 0.0 or alpha != 0.0
    if corner:
        g = -diag[0] if diag[0] != 0 else -1.0
        diag = diag.copy()
        diag[0] -= g
        diag[-1] -= alpha * beta / g
    dl, d, du, du2, ipiv, info = dgttrf(lower, diag, upper)
    if info > 0:
        raise SingularOperatorError(int(info) - 1)

    def tri_solve(b):
        x, info = dgttrs(dl, d, du, du2, ipiv, b)
        if info != 0:
            raise ArithmeticError(f"dgttrs failed with info={info}")
        return x

    if not corner:
        return lambda b: tri_solve(b)

    u = np.zeros(n)
    u[0], u[-1] = g, alpha
    v = np.zeros(n)
    v[0], v[-1] = 1.0, beta / g
    z = tri_solve(u)
    denom = 1.0 + v @ z
    if abs(denom) <= 1e-300:
        raise SingularOperatorError(n - 1, "cyclic correction is singular")

    def solve(b):
        y = tri_solve(b)
        if y.ndim == 1:
            return y - (v @ y) / denom * z
        return y - np.outer(z, (v @ y) / denom)

    return solve


def _sparse_lu_solver(M: sp.csr_matrix):
    try:
        lu = spla.splu(M.tocsc(), permc_spec="COLAMD")
    except RuntimeError:
        # superlu does not report the pivot; recover it from a dense LU
        _, piv_info = _dense_pivot(M.toarray())
        raise SingularOperatorError(piv_info) from None
    diag_u = lu.U.diagonal()
    if np.any(diag_u == 0):
        raise SingularOperatorError(int(np.flatnonzero(diag_u == 0)[0]))
    return lu.solve


def _dense_pivot(M):
    lu, piv, info = scipy.linalg.lapack.dgetrf(M)
    return lu, max(int(info) - 1, 0)


def thin_qr(M) -> tuple[np.ndarray, np.ndarray]:
    """Householder thin QR with a nonnegative diagonal in ``R``."""
    M = np.asarray(M, dtype=float)
    n, s = M.shape
    if s > n:
        raise DimensionError(f"thin QR needs s <= n, got {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


@dataclass(frozen=True)
class ThinSVD:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def thin_svd(M) -> ThinSVD:
    """Thin SVD via thin QR followed by one-sided Jacobi on the small factor.

    Wide matrices are handled through the transpose, so the factors have
    ``min(n, s)`` columns.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"thin SVD needs a matrix, got shape {M.shape}")
    n, s = M.shape
    if s > n:
        t = thin_svd(M.T)
        return ThinSVD(t.V, t.singular_values, t.U)
    Q, R = thin_qr(M)
    B, V = _one_sided_jacobi(R)
    sigma = np.linalg.norm(B, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, B, V = sigma[order], B[:, order], V[:, order]
    # orthonormalize the scaled columns; QR also completes null directions
    Ur, Rb = np.linalg.qr(B)
    signs = np.where(np.diag(Rb) < 0, -1.0, 1.0)
    Ur = Ur * signs
    return ThinSVD(Q @ Ur, sigma, V)


def _round_robin(s: int):
    """Disjoint index pairs for each round of a parallel-ordered Jacobi sweep."""
    players = list(range(s)) + ([-1] if s % 2 else [])
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        pairs = [(players[i], players[k - 1 - i]) for i in range(k // 2)]
        rounds.append([(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0])
        players = [players[0], players[-1]] + players[1:-1]
    return [(np.array([p for p, _ in r], int), np.array([q for _, q in r], int)) for r in rounds if r]


def _one_sided_jacobi(A, max_sweeps=60):
    A = np.array(A, dtype=float)
    s = A.shape[1]
    V = np.eye(s)
    if s < 2:
        return A, V
    rounds = _round_robin(s)
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            ap, aq = A[:, p], A[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gam = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gam) > s * eps * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            p, q = p[active], q[active]
            alpha, beta, gam = alpha[active], beta[active], gam[active]
            zeta = (beta - alpha) / (2.0 * gam)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta**2))
            t[zeta == 0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t**2)
            sn = c * t
            for X in (A, V):
                xp, xq = X[:, p].copy(), X[:, q]
                X[:, p] = c * xp - sn * xq
                X[:, q] = sn * xp + c * xq
        if not rotated:
            break
    return A, V


def dense_expm(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.size == 0:
        return np.zeros_like(H)
    return scipy.linalg.expm(H)


def phi_functions(H, up_to: int) -> list[np.ndarray]:
    """Return ``[phi_0(H), ..., phi_up_to(H)]`` from one augmented exponential.

    The block matrix ``[[H, I, 0..], [0, 0, I, ..], ..., [0 .. 0]]`` has
    exponential whose first block row is ``[phi_0, phi_1, ..., phi_p]``.
    """
    if not 1 <= up_to <= 4:
        raise ValueError("phi order must be in 1..4")
    H = np.asarray(H, dtype=float)
    k = H.shape[0]
    p = up_to
    M = np.zeros(((p + 1) * k, (p + 1) * k))
    M[:k, :k] = H
    for j in range(p):
        M[j * k : (j + 1) * k, (j + 1) * k : (j + 2) * k] = np.eye(k)
    E = dense_expm(M)
    return [E[:k, j * k : (j + 1) * k] for j in range(p + 1)]


def phi_scalar(z, k: int) -> np.ndarray:
    """Elementwise ``phi_k(z)`` for real or complex arrays."""
    z = np.asarray(z)
    out = np.empty(z.shape, dtype=np.result_type(z.dtype, float))
    small = np.abs(z) < 1.0
    if np.any(small):
        zs = z[small]
        acc = np.zeros_like(zs, dtype=out.dtype)
        term = np.full_like(acc, 1.0 / factorial(k))
        for i in range(30):
            acc = acc + term
            term = term * zs / (i + k + 1)
        out[small] = acc
    big = ~small
    if np.any(big):
        zb = z[big]
        val = np.exp(zb)
        for j in range(k):
            val = (val - 1.0 / factorial(j)) / zb
        out[big] = val
    return out
