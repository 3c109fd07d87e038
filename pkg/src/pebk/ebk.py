"""Exponential block Krylov (EBK) solver.

Solves ``y' = A y + U p(t)`` on one window by projecting onto the
shift-and-invert block Krylov space built from ``(I - gamma A)^{-1}`` and
``U``.  The projected system is integrated exactly on each cubic piece of
``p``; the stopping test uses the true residual, which has rank at most
the block width and is therefore cheap to evaluate at every sample node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.linalg

from .linalg import SparseOperator, factor_shifted, phi_scalar, thin_qr
from .lowrank import LowRankSource
from .waveform import Waveform

_EIG_COND_LIMIT = 1e6


class EbkConvergenceError(RuntimeError):
    def __init__(self, best_residual: float, krylov_dim: int):
        self.best_residual = best_residual
        self.krylov_dim = krylov_dim
        super().__init__(
            f"Krylov dimension {krylov_dim} exhausted; best relative residual {best_residual:.3e}"
        )


@dataclass(frozen=True)
class EbkConfig:
    """Solver settings.

    ``gamma`` fixes the shift-and-invert parameter; when ``None`` it is
    ``gamma_factor`` times the window length.
    """

    tol: float = 1e-4
    restart_length: int = 20
    gamma: float | None = None
    gamma_factor: float = 0.1
    max_krylov_dim: int = 4000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.restart_length < 1:
            raise ValueError("restart_length must be >= 1")

    def shift(self, length: float) -> float:
        return self.gamma if self.gamma is not None else self.gamma_factor * length


@dataclass
class EbkInfo:
    residuals: list = field(default_factory=list)  # (cycle, blocks, relative residual)
    cycles: int = 0
    krylov_dim: int = 0
    block_width: int = 0
    gamma: float = 0.0


@dataclass
class EbkResult:
    waveform: Waveform
    info: EbkInfo


def integrate_projected(H, E, z0, nodes, coeffs) -> np.ndarray:
    """Exact solution of ``z' = H z + E p(t)`` at the nodes.

    ``coeffs[i, k]`` are the power-basis coefficients of ``p`` on
    ``[nodes[i], nodes[i+1]]``.  Returns an array of shape ``(s, N)``.
    """
    H = np.asarray(H, dtype=float)
    N = H.shape[0]
    nodes = np.asarray(nodes, dtype=float)
    h = np.diff(nodes)
    forcing = np.einsum("ikm,nm->ikn", coeffs, E) if coeffs.shape[-1] else np.zeros((len(h), 4, N))
    lam, X = np.linalg.eig(H)
    if np.linalg.cond(X) < _EIG_COND_LIMIT:
        return _integrate_eig(lam, X, z0, h, forcing)
    return _integrate_augmented(H, E, z0, h, coeffs)


def _integrate_eig(lam, X, z0, h, forcing):
    Xinv = np.linalg.inv(X)
    zeta = Xinv @ z0
    b = forcing @ Xinv.T  # (s-1, 4, N)
    hl = h[:, None] * lam[None, :]
    growth = np.exp(hl)
    inc = np.zeros_like(hl, dtype=complex)
    for k in range(4):
        if np.any(b[:, k]):
            inc += factorial(k) * h[:, None] ** (k + 1) * phi_scalar(hl, k + 1) * b[:, k]
    out = np.empty((len(h) + 1, len(lam)), dtype=complex)
    out[0] = zeta
    for i in range(len(h)):
        zeta = growth[i] * zeta + inc[i]
        out[i + 1] = zeta
    return (out @ X.T).real


def _integrate_augmented(H, E, z0, h, coeffs):
    N = H.shape[0]
    m = coeffs.shape[-1]
    size = N + 4 * m
    M = np.zeros((size, size))
    M[:N, :N] = H
    if m:
        M[:N, N : N + m] = E
        for j in range(3):
            M[N + j * m : N + (j + 1) * m, N + (j + 1) * m : N + (j + 2) * m] = np.eye(m)
    cache = {}
    z = np.asarray(z0, dtype=float)
    out = [z]
    for i, hi in enumerate(h):
        key = round(hi, 15)
        if key not in cache:
            cache[key] = scipy.linalg.expm(hi * M)
        w = np.concatenate([z] + [factorial(k) * coeffs[i, k] for k in range(4)]) if m else z
        z = (cache[key] @ w)[:N]
        out.append(z)
    return np.array(out)


class BlockKrylovState:
    """Shift-and-invert block Arnoldi process for one restart cycle."""

    def __init__(self, fac, start_block):
        Q, R = thin_qr(start_block)
        self.fac = fac
        self.gamma = fac.gamma
        self.R0 = R
        self.q = Q.shape[1]
        self.blocks = [Q]
        self.H = np.zeros((0, 0))
        self.next_block = None
        self.subdiag = None

    @property
    def l(self) -> int:
        return len(self.blocks)

    @property
    def basis(self) -> np.ndarray:
        return np.hstack(self.blocks)

    def extend(self) -> None:
        """One block Arnoldi step with two passes of Gram-Schmidt."""
        if self.next_block is not None:
            self.blocks.append(self.next_block)
        q = self.q
        l = len(self.blocks)
        W = self.fac.solve(self.blocks[-1])
        col = np.zeros((l * q, q))
        for _ in range(2):
            for i, Vi in enumerate(self.blocks):
                c = Vi.T @ W
                W = W - Vi @ c
                col[i * q : (i + 1) * q] += c
        # pivoting moves the directions lost to near dependence into
        # trailing rows of Rn that are small as a whole
        Qn, Rn, piv = scipy.linalg.qr(W, mode="economic", pivoting=True)
        Rn = Rn[:, np.argsort(piv)]
        # those columns of Qn are amplified rounding noise; one more pass
        # restores orthogonality, folded into Rn and col
        V = self.basis
        c = V.T @ Qn
        Qn, R2 = thin_qr(Qn - V @ c)
        col += c @ Rn
        Rn = R2 @ Rn
        self._complete_block(Qn, Rn, col)
        Hn = np.zeros((l * q, l * q))
        Hn[: (l - 1) * q, : (l - 1) * q] = self.H
        Hn[:, (l - 1) * q :] = col
        if l > 1:
            Hn[(l - 1) * q :, (l - 2) * q : (l - 1) * q] = self.subdiag
        self.H = Hn
        self.next_block = Qn
        self.subdiag = Rn

    def _complete_block(self, Qn, Rn, col) -> None:
        """Replace directions lost to breakdown by fresh orthonormal ones.

        Columns of ``Qn`` whose rows of ``Rn`` are negligible carry no
        information and need not be orthogonal to the basis; the rows are
        zeroed and the columns redrawn, which keeps the Arnoldi relation.
        """
        scale = max(np.abs(col).max(initial=0.0), np.abs(Rn).max(initial=0.0), 1e-300)
        lost = np.flatnonzero(np.abs(Rn).max(axis=1) <= 1e-12 * scale)
        if lost.size == 0:
            return
        rng = np.random.default_rng(len(self.blocks))
        Rn[lost, :] = 0.0
        for i in lost:
            others = np.hstack(self.blocks + [np.delete(Qn, lost[lost >= i], axis=1)])
            v = rng.standard_normal(Qn.shape[0])
            for _ in range(2):
                v -= others @ (others.T @ v)
            Qn[:, i] = v / np.linalg.norm(v)

    def projected_operator(self) -> tuple[np.ndarray, np.ndarray]:
        Hinv = np.linalg.inv(self.H)
        return (np.eye(self.H.shape[0]) - Hinv) / self.gamma, Hinv

    def arnoldi_residual(self) -> float:
        """``||(I - gamma A)^{-1} V_l - V_{l+1} Hbar_l||`` (for testing)."""
        V = self.basis
        lhs = self.fac.solve(V)
        rhs = V @ self.H
        rhs[:, -self.q :] += self.next_block @ self.subdiag
        return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), 1e-300))

    def residual_map(self, Hinv: np.ndarray):
        """Residual ``r(t) = Qy @ L @ z(t)`` for the projected state ``z(t)``.

        Uses ``A V_l = V_l H_proj + (1/gamma) (I - gamma A) W S E_l^T H_l^{-1}``,
        where ``W`` is the next block and ``S`` the subdiagonal block.
        """
        Y = self.fac.apply(self.next_block)
        Qy, Ry = thin_qr(Y)
        L = Ry @ self.subdiag @ Hinv[-self.q :, :] / self.gamma
        return Qy, L

    def residual_factors(self, Z: np.ndarray, Hinv: np.ndarray):
        """Residual ``r(t_i) = Qy @ C[i]`` for projected states ``Z`` (rows)."""
        Qy, L = self.residual_map(Hinv)
        return Qy, Z @ L.T


def krylov_residual(state: BlockKrylovState, Z, Hinv, scale: float) -> float:
    """Max over nodes of the residual norm, relative to ``scale``."""
    _, C = state.residual_factors(Z, Hinv)
    return float(np.max(np.linalg.norm(C, axis=1)) / scale)


class _Chain:
    """Projected systems of finished restart cycles, integrated jointly.

    Cycle ``k`` is driven by the residual of cycle ``k-1``, which is
    ``Qy L z_{k-1}(t)``, so the stacked projected states obey one block
    lower-triangular linear ODE.  Integrating it exactly keeps restarts free
    of any interpolation of the residual in time.
    """

    def __init__(self, m: int):
        self.H = np.zeros((0, 0))
        self.E = np.zeros((0, m))
        self.z0 = np.zeros(0)
        self.prev = None  # (slice of the last cycle, its residual map L)

    @property
    def size(self) -> int:
        return self.H.shape[0]

    def extended(self, Hc, Ein, m_src: int, first: bool):
        """Chain plus a new cycle with projected operator ``Hc``.

        ``Ein`` gives the cycle's start block in cycle coordinates: for the
        first cycle its columns map the source coefficients and ``y0``,
        afterwards they map the previous residual coefficients.
        """
        N0, N = self.size, Hc.shape[0]
        H = np.zeros((N0 + N, N0 + N))
        H[:N0, :N0] = self.H
        H[N0:, N0:] = Hc
        E = np.zeros((N0 + N, self.E.shape[1]))
        E[:N0] = self.E
        z0 = np.zeros(N0 + N)
        z0[:N0] = self.z0
        if first:
            E[N0:] = Ein[:, :m_src]
            if Ein.shape[1] > m_src:
                z0[N0:] = Ein[:, m_src]
        else:
            sl, L = self.prev
            H[N0:, sl] = Ein @ L
        return H, E, z0

    def commit(self, H, E, z0, L) -> None:
        N0 = self.size
        self.H, self.E, self.z0 = H, E, z0
        self.prev = (slice(N0, H.shape[0]), L)


def solve_window(
    A: SparseOperator,
    src: LowRankSource | None,
    nodes,
    cfg: EbkConfig,
    y0=None,
) -> EbkResult:
    """Solve ``y' = A y + U p(t)``, ``y(nodes[0]) = y0`` at the nodes."""
    nodes = np.asarray(nodes, dtype=float)
    n = A.n
    length = nodes[-1] - nodes[0]
    gamma = cfg.shift(length)
    info = EbkInfo(gamma=gamma)
    y0 = None if y0 is None or not np.any(y0) else np.asarray(y0, dtype=float)
    if src is not None and src.m == 0:
        src = None
    if src is None and y0 is None:
        return EbkResult(Waveform([(nodes, np.zeros((len(nodes), n)))]), info)
    if src is not None and not np.allclose(src.nodes, nodes, rtol=0, atol=1e-13):
        raise ValueError("source nodes and solution nodes differ")

    scale = 0.0
    m_src = 0
    cols = []
    if src is not None:
        scale = float(np.max(np.linalg.norm(src.coeff_samples, axis=1)))
        m_src = src.m
        cols.append(src.U)
        coeffs = src.piece_coefficients()
    else:
        coeffs = np.zeros((len(nodes) - 1, 4, 0))
    if y0 is not None:
        scale += np.linalg.norm(y0) / length
        cols.append(y0[:, None])
    start = np.hstack(cols)
    fac = factor_shifted(A, gamma)

    chain = _Chain(m_src)
    total = np.zeros((len(nodes), n))
    best = np.inf
    cycle = 0
    while True:
        first = cycle == 0
        state = BlockKrylovState(fac, start)
        info.block_width = max(info.block_width, state.q)
        done = False
        for _ in range(cfg.restart_length):
            if (len(state.blocks) + 1 + (state.next_block is not None)) * state.q > n:
                # the next block would not fit in R^n: the system is small, solve it densely
                H, E, z0 = chain.extended(A.toarray(), start, m_src, first)
                Z = integrate_projected(H, E, z0, nodes, coeffs)
                total += Z[:, chain.size :]
                info.residuals.append((cycle, state.l, 0.0))
                info.cycles = cycle + 1
                return EbkResult(Waveform([(nodes, total)]), info)
            state.extend()
            info.krylov_dim += state.q
            N = state.H.shape[0]
            Hproj, Hinv = state.projected_operator()
            Ein = np.zeros((N, state.R0.shape[1]))
            Ein[: state.q] = state.R0
            H, E, z0 = chain.extended(Hproj, Ein, m_src, first)
            Z = integrate_projected(H, E, z0, nodes, coeffs)[:, chain.size :]
            Qy, L = state.residual_map(Hinv)
            C = Z @ L.T
            res = float(np.max(np.linalg.norm(C, axis=1)) / scale)
            best = min(best, res)
            info.residuals.append((cycle, state.l, res))
            if res <= cfg.tol:
                done = True
                break
            if info.krylov_dim >= cfg.max_krylov_dim:
                raise EbkConvergenceError(best, info.krylov_dim)
        total += Z @ state.basis.T
        info.cycles = cycle + 1
        if done:
            return EbkResult(Waveform([(nodes, total)]), info)
        # restart from the residual: e' = A e + Qy L z(t), e(t0) = 0
        chain.commit(H, E, z0, L)
        start = Qy
        cycle += 1
        info.residuals.append((cycle, 0, res))


def ebk_solve(A: SparseOperator, src: LowRankSource, interval, cfg: EbkConfig, full_output=False):
    """Zero-initial-state solve on ``interval`` sampled at the source nodes."""
    t0, t1 = interval
    if not (np.isclose(src.t_start, t0) and np.isclose(src.t_end, t1)):
        raise ValueError("source is not defined on the requested interval")
    res = solve_window(A, src, src.nodes, cfg)
    return res if full_output else res.waveform


def _merge_nodes(node_sets):
    merged = [np.asarray(node_sets[0], float)]
    for nodes in node_sets[1:]:
        merged.append(np.asarray(nodes, float)[1:])
    return np.concatenate(merged)


def propagate_homogeneous(ops, v, node_sets, cfg: EbkConfig, full_output=False):
    """``y' = A_i y`` across consecutive intervals, starting from ``v``.

    ``ops`` is one operator or a list with one operator per interval;
    runs of the same operator are handled by a single Krylov solve, and
    the end state is carried across operator changes.
    """
    node_sets = [np.asarray(ns, float) for ns in node_sets]
    if isinstance(ops, SparseOperator):
        ops = [ops] * len(node_sets)
    if len(ops) != len(node_sets):
        raise ValueError("need one operator per interval")
    v = np.asarray(v, dtype=float)
    segments, infos = [], []
    i = 0
    while i < len(node_sets):
        j = i + 1
        while j < len(node_sets) and ops[j] is ops[i]:
            j += 1
        group = node_sets[i:j]
        merged = _merge_nodes(group)
        res = solve_window(ops[i], None, merged, cfg, y0=v)
        infos.append(res.info)
        values = res.waveform.segments[0].values
        start = 0
        for nodes in group:
            segments.append((nodes, values[start : start + len(nodes)]))
            start += len(nodes) - 1
        v = values[-1]
        i = j
    wf = Waveform(segments)
    return (wf, infos) if full_output else wf
