"""Waveform relaxation for ``u' = A u + g(t, u)``.

Iteration ``k`` freezes the nonlinearity along the previous iterate and
moves a time-averaged Jacobian into the operator:

    u'_{k+1} = (A + J_k) u_{k+1} + g(t, u_k) - J_k u_k,

with ``J_k`` constant on each subinterval.  In shifted form ``u = u0 + w``
the source is ``A u0 + g(t, u_k) + J_k (u0 - u_k)`` and ``w(0) = 0``, so
each iteration is one Paraexp solve with a piecewise-constant operator.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ebk import EbkConfig
from .linalg import SparseOperator
from .model import LinearIVP, NonlinearIVP
from .paraexp import Partition, RankRule, SubproblemSolution, run_tasks, solve_subproblem, superpose
from .report import RunReport, relative_error
from .waveform import Waveform

HISTORY_COLUMNS = ("iteration", "P", "error", "iterate_change", "iter_time_max")
EFFICIENCY_COLUMNS = ("P", "total_time", "speedup", "efficiency", "efficiency_bound")
DIVERGENCE_FACTOR = 1e3


class WrDivergenceError(RuntimeError):
    def __init__(self, iteration: int, change: float, smallest: float):
        self.iteration = iteration
        self.change = change
        super().__init__(
            f"waveform relaxation diverged at iteration {iteration}: iterate change norm "
            f"{change:.3e} exceeds {DIVERGENCE_FACTOR:g} x the smallest change {smallest:.3e}"
        )


@dataclass(frozen=True)
class WrConfig:
    K: int = 10
    wr_tol: float = 0.0  # 0 runs exactly K iterations
    jacobian_mode: str = "averaged"  # or "none" (Picard)
    serial_jacobian: bool = False  # one global average over [0, T]

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.wr_tol < 0:
            raise ValueError("wr_tol must be nonnegative")
        if self.jacobian_mode not in ("none", "averaged"):
            raise ValueError(f"unknown jacobian_mode {self.jacobian_mode!r}")


@dataclass(frozen=True)
class PiecewiseJacobian:
    """One constant operator per subinterval."""

    ops: tuple[SparseOperator, ...]

    def __len__(self):
        return len(self.ops)

    def __getitem__(self, j: int) -> SparseOperator:
        """Operator on subinterval ``j`` (1-based)."""
        return self.ops[j - 1]


def trapezoid_weights(nodes) -> np.ndarray:
    h = np.diff(np.asarray(nodes, dtype=float))
    w = np.zeros(len(h) + 1)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def _average(jac_g, samples) -> SparseOperator:
    """``sum_i w_i jac_g(u_i) / sum_i w_i`` for ``samples = [(w_i, u_i)]``."""
    total = sum(w for w, _ in samples)
    acc = None
    for w, u in samples:
        term = jac_g(u).scaled(w / total)
        acc = term if acc is None else acc + term
    return acc


def average_jacobian(ivp: NonlinearIVP, u_k: Waveform, partition: Partition, serial: bool = False) -> PiecewiseJacobian:
    """Trapezoidal average of ``jac_g(u_k(t))`` over each subinterval's nodes.

    With ``serial=True`` a single average over ``[0, T]`` is used on every
    subinterval.
    """
    per_interval = []
    for seg in u_k.segments:
        w = trapezoid_weights(seg.nodes)
        per_interval.append([(wi, ui) for wi, ui in zip(w, seg.values)])
    if serial:
        J = _average(ivp.jac_g, [s for samples in per_interval for s in samples])
        return PiecewiseJacobian(tuple(J for _ in range(partition.P)))
    return PiecewiseJacobian(tuple(_average(ivp.jac_g, samples) for samples in per_interval))


def wr_source(ivp: NonlinearIVP, u_k: Waveform, J_k: PiecewiseJacobian | None, u0):
    """Shifted source ``g_hat_k(t, j) = A u0 + g(t, u_k) + J_{k,j} (u0 - u_k)``.

    ``j`` selects the subinterval whose Jacobian applies; it only matters
    at shared boundaries.  With ``J_k=None`` the Picard source is returned.
    """
    u0 = np.asarray(u0, dtype=float)
    Au0 = ivp.A @ u0

    def g_hat(t, j=None):
        u = u_k(t)
        out = Au0 + ivp.g(t, u)
        if J_k is not None:
            if j is None:
                j = u_k.segment_index(t) + 1
            out = out + J_k[j] @ (u0 - u)
        return out

    return g_hat


def wr_operators(ivp: NonlinearIVP, J_k: PiecewiseJacobian | None, P: int) -> list[SparseOperator]:
    if J_k is None:
        return [ivp.A] * P
    cache = {}
    ops = []
    for J in J_k.ops:
        # identical Jacobians keep one operator so homogeneous legs are merged
        if id(J) not in cache:
            cache[id(J)] = ivp.A + J
        ops.append(cache[id(J)])
    return ops


def wr_parallel_step(
    ivp: NonlinearIVP,
    u_k: Waveform,
    partition: Partition,
    cfg: WrConfig,
    ebk_cfg: EbkConfig,
    rank: RankRule = RankRule(m=12),
    mode: str = "emulated",
    clock=time.perf_counter,
) -> tuple[Waveform, list[SubproblemSolution]]:
    """One iteration: build ``J_k`` and ``g_hat_k``, solve ``P`` subproblems, superpose."""
    J_k = None
    if cfg.jacobian_mode == "averaged":
        J_k = average_jacobian(ivp, u_k, partition, serial=cfg.serial_jacobian)
    g_hat = wr_source(ivp, u_k, J_k, ivp.u0)
    sources = [(lambda t, j=j: g_hat(t, j)) for j in range(1, partition.P + 1)]
    ops = wr_operators(ivp, J_k, partition.P)
    tasks = [
        (lambda j=j: solve_subproblem(ops, sources, partition, j, ebk_cfg, rank, clock))
        for j in range(1, partition.P + 1)
    ]
    subs = run_tasks(tasks, mode)
    return superpose(ivp.u0, subs), subs


def as_nonlinear(ivp: LinearIVP) -> NonlinearIVP:
    """View a linear IVP as ``g(t, u) = g(t)`` with zero Jacobian."""
    if ivp.offset is not None:
        raise ValueError("linear IVPs with a solution offset are not supported")
    n = ivp.A.n
    zero = SparseOperator.zeros(n, ivp.A.structure_hint)
    return NonlinearIVP(
        A=ivp.A, g=lambda t, u: ivp.g(t), jac_g=lambda u: zero, u0=ivp.u0, T=ivp.T,
        forcing=ivp.forcing, exact=ivp.exact,
    )


@dataclass
class WrResult:
    waveform: Waveform
    errors: list[float]
    changes: list[float]
    report: RunReport
    iter_times: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.changes)

    @property
    def total_time(self) -> float:
        return float(sum(self.iter_times))


def wr_run(
    ivp: NonlinearIVP,
    partition: Partition,
    cfg: WrConfig,
    ebk_cfg: EbkConfig,
    rank: RankRule = RankRule(m=12),
    reference=None,
    mode: str = "emulated",
    clock=time.perf_counter,
    initial: Waveform | None = None,
) -> WrResult:
    """Iterate from the constant guess ``u(t) = u0`` for ``K`` sweeps or until
    the relative iterate change drops below ``wr_tol``.

    ``reference`` is a callable ``t -> u(t)``; it defaults to ``ivp.exact``.
    The per-iteration time is the slowest subproblem plus the serial
    Jacobian and superposition work.
    """
    if isinstance(ivp, LinearIVP):
        ivp = as_nonlinear(ivp)
    reference = ivp.exact if reference is None else reference
    u_ref = None if reference is None else reference(partition.T)
    u = initial if initial is not None else Waveform.constant(partition.node_sets, ivp.u0)
    report = RunReport(HISTORY_COLUMNS, name="wr-history")
    errors, changes, times = [], [], []
    smallest = np.inf
    for k in range(1, cfg.K + 1):
        start = clock()
        u_new, subs = wr_parallel_step(ivp, u, partition, cfg, ebk_cfg, rank, mode, clock)
        elapsed = clock() - start
        work = sum(s.tau1 + s.tau2 for s in subs)
        iter_time = elapsed - work + max(s.tau1 + s.tau2 for s in subs)
        if mode != "emulated":
            iter_time = elapsed
        step = (u_new - u).norm()
        norm = u_new.norm()
        change = step / norm if norm > 0 else step
        err = relative_error(u_new.end_state(), u_ref) if u_ref is not None else float("nan")
        errors.append(err)
        changes.append(change)
        times.append(iter_time)
        report.add(iteration=k, P=partition.P, error=err, iterate_change=change, iter_time_max=iter_time)
        # growth of the absolute change; the relative one saturates when u blows up
        if not np.isfinite(step) or step > DIVERGENCE_FACTOR * smallest:
            raise WrDivergenceError(k, step, smallest)
        smallest = min(smallest, step)
        u = u_new
        if cfg.wr_tol > 0 and change <= cfg.wr_tol:
            break
    return WrResult(u, errors, changes, report, times)


def plateau_level(errors, tail: int = 3) -> float:
    """Median of the last ``tail`` errors, where the history has levelled off."""
    return float(np.median(np.asarray(errors, dtype=float)[-tail:]))


def iterations_to_reach(errors, level: float) -> int:
    """First iteration (1-based) with error at or below ``level``."""
    for k, e in enumerate(errors, start=1):
        if e <= level:
            return k
    raise ValueError(f"error level {level:.3e} never reached")


def iterations_to_plateau(errors, factor: float = 2.0) -> int:
    return iterations_to_reach(errors, factor * plateau_level(errors))


def efficiency_rows(results: dict[int, WrResult], iterations_to_level: dict[int, int] | None = None) -> RunReport:
    """Speedup against the ``P=1`` run and the ``K_1/K_P`` bound."""
    report = RunReport(EFFICIENCY_COLUMNS, name="wr-efficiency")
    base = results[1].total_time
    for P in sorted(results):
        total = results[P].total_time
        sp = base / total if total > 0 else float("nan")
        bound = float("nan")
        if iterations_to_level:
            bound = iterations_to_level[1] / iterations_to_level[P]
        report.add(P=P, total_time=total, speedup=sp, efficiency=sp / P, efficiency_bound=bound)
    return report
