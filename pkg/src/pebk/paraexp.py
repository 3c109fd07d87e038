"""Time-parallel solution of linear IVPs by superposition of subsolutions.

The shifted problem ``u^' = A u^ + g^(t)``, ``u^(0) = 0`` is split into
``P`` problems whose sources are the restrictions of ``g^`` to the
subintervals.  Subproblem ``j`` is solved with EBK on its own subinterval
and then propagated homogeneously to the end; the solution is ``u0`` plus
the sum of the subsolutions.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ebk import EbkConfig, EbkInfo, propagate_homogeneous, solve_window
from .lowrank import LowRankSource, SampleGrid, low_rank_source
from .model import LinearIVP
from .waveform import Waveform

THREADS_ENV = "PEBK_THREADS"


@dataclass(frozen=True)
class Partition:
    boundaries: tuple[float, ...]
    s: int = 10
    node_kind: str = "chebyshev"

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if len(b) < 2:
            raise ValueError("a partition needs at least one subinterval")
        if b[0] != 0.0:
            raise ValueError("partitions start at t = 0")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("partition boundaries must increase strictly")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def uniform(cls, T: float, P: int, s: int = 10, node_kind: str = "chebyshev") -> Partition:
        if P < 1:
            raise ValueError("P must be >= 1")
        return cls(tuple(np.linspace(0.0, T, P + 1)), s, node_kind)

    @property
    def P(self) -> int:
        return len(self.boundaries) - 1

    @property
    def T(self) -> float:
        return self.boundaries[-1]

    def interval(self, j: int) -> tuple[float, float]:
        """Bounds of subinterval ``j`` (1-based)."""
        if not 1 <= j <= self.P:
            raise IndexError(f"subinterval {j} outside 1..{self.P}")
        return self.boundaries[j - 1], self.boundaries[j]

    def grid(self, j: int) -> SampleGrid:
        a, b = self.interval(j)
        return SampleGrid(a, b, self.s, self.node_kind)

    @property
    def node_sets(self) -> list[np.ndarray]:
        return [self.grid(j).nodes for j in range(1, self.P + 1)]


@dataclass(frozen=True)
class RankRule:
    m: int | None = None
    tol: float | None = None

    def build(self, g, grid: SampleGrid) -> LowRankSource:
        m = None if self.m is None else min(self.m, grid.s)
        return low_rank_source(g, grid, m=m, tol=self.tol)


@dataclass
class SubproblemSolution:
    j: int
    waveform: Waveform
    tau1: float
    tau2: float
    info: list = field(default_factory=list)


def shift_to_homogeneous(ivp: LinearIVP):
    """Return ``(g_hat, offset)`` with ``g_hat(t) = A u0 + g(t)``.

    The physical solution is ``offset + u_hat(t)``.
    """
    Au0 = ivp.A @ ivp.u0
    g = ivp.g
    offset = ivp.u0 if ivp.offset is None else ivp.u0 + ivp.offset
    if not np.any(Au0):
        return g, offset
    return (lambda t: Au0 + g(t)), offset


def restricted(g_hat: Callable, partition: Partition, j: int) -> Callable:
    """``g_hat`` on ``[T_{j-1}, T_j)`` and zero elsewhere."""
    a, b = partition.interval(j)
    last = j == partition.P

    def g_j(t):
        inside = a <= t < b or (last and t == b)
        val = np.asarray(g_hat(t), dtype=float)
        return val if inside else np.zeros_like(val)

    return g_j


def restrict_source(g_hat, partition: Partition, j: int, rank: RankRule) -> LowRankSource:
    """Low-rank source built from samples on subinterval ``j`` only."""
    return rank.build(g_hat, partition.grid(j))


def solve_subproblem(
    A, g_hat, partition: Partition, j: int, cfg: EbkConfig, rank: RankRule, clock=time.perf_counter
) -> SubproblemSolution:
    """Nonhomogeneous leg on subinterval ``j``, then homogeneous propagation to ``T``.

    ``A`` is one operator or a list with one operator per subinterval;
    ``g_hat`` likewise is one source function or one per subinterval.
    """
    ops = A if isinstance(A, (list, tuple)) else [A] * partition.P
    if isinstance(g_hat, (list, tuple)):
        g_hat = g_hat[j - 1]
    n = ops[0].n
    node_sets = partition.node_sets
    t0 = clock()
    src = restrict_source(g_hat, partition, j, rank)
    leg = solve_window(ops[j - 1], src, node_sets[j - 1], cfg)
    t1 = clock()
    segments = [(nodes, np.zeros((len(nodes), n))) for nodes in node_sets[: j - 1]]
    segments.append(leg.waveform.segments[0])
    infos = [leg.info]
    if j < partition.P:
        hom, hom_info = propagate_homogeneous(
            ops[j:], leg.waveform.end_state(), node_sets[j:], cfg, full_output=True
        )
        segments.extend(hom.segments)
        infos.extend(hom_info)
    t2 = clock()
    return SubproblemSolution(j, Waveform(segments), t1 - t0, t2 - t1, infos)


def superpose(u0, subsolutions) -> Waveform:
    """``u0 + sum_j v_j`` at every stored node."""
    subs = list(subsolutions)
    if not subs:
        raise ValueError("no subsolutions to superpose")
    total = subs[0].waveform
    for sub in subs[1:]:
        total = total + sub.waveform
    return total.shifted(u0)


def run_tasks(tasks, mode: str = "emulated"):
    """Fork-join over independent callables; results in submission order."""
    if mode == "emulated":
        return [t() for t in tasks]
    if mode == "threaded":
        workers = int(os.environ.get(THREADS_ENV, os.cpu_count() or 1))
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            return list(pool.map(lambda t: t(), tasks))
    raise ValueError(f"unknown timing mode {mode!r}")


@dataclass
class ParallelRun:
    waveform: Waveform
    subsolutions: list[SubproblemSolution]

    @property
    def tau1(self) -> list[float]:
        return [s.tau1 for s in self.subsolutions]

    @property
    def tau2(self) -> list[float]:
        return [s.tau2 for s in self.subsolutions]


def paraexp_solve(
    ivp: LinearIVP,
    partition: Partition,
    cfg: EbkConfig,
    rank: RankRule = RankRule(m=None, tol=1e-12),
    mode: str = "emulated",
    clock=time.perf_counter,
) -> ParallelRun:
    g_hat, offset = shift_to_homogeneous(ivp)
    tasks = [
        (lambda j=j: solve_subproblem(ivp.A, g_hat, partition, j, cfg, rank, clock))
        for j in range(1, partition.P + 1)
    ]
    subs = run_tasks(tasks, mode)
    return ParallelRun(superpose(offset, subs), subs)


def ebk_serial(
    ivp: LinearIVP,
    partition: Partition,
    cfg: EbkConfig,
    rank: RankRule = RankRule(m=None, tol=1e-12),
    clock=time.perf_counter,
) -> tuple[Waveform, float, list[EbkInfo]]:
    """Sequential EBK over the subintervals, carrying the state across windows.

    Returns the solution, the elapsed time and the per-window solver info.
    """
    start = clock()
    offset = np.zeros(ivp.A.n) if ivp.offset is None else ivp.offset
    y = np.asarray(ivp.u0, dtype=float)
    segments, infos = [], []
    for j in range(1, partition.P + 1):
        grid = partition.grid(j)
        src = rank.build(ivp.g, grid)
        res = solve_window(ivp.A, src, grid.nodes, cfg, y0=y)
        seg = res.waveform.segments[0]
        values = seg.values
        segments.append((seg.nodes, values + offset))
        infos.append(res.info)
        y = values[-1]
    return Waveform(segments), clock() - start, infos
