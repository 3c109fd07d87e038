"""Comparison and reference solvers."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .ebk import EbkConfig, propagate_homogeneous
from .linalg import SparseOperator, dense_expm, factor_shifted
from .model import LinearIVP, NonlinearIVP
from .paraexp import ParallelRun, Partition, SubproblemSolution, run_tasks, shift_to_homogeneous, superpose
from .waveform import Waveform

CN_ORDER = 2


@dataclass(frozen=True)
class CnConfig:
    dt: float = 1e-3
    q: int = CN_ORDER

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def refined_dt(self, P: int) -> float:
        """Step size for ``P`` subintervals, reduced by ``P**(1/(2q))``."""
        return self.dt / P ** (1.0 / (2 * self.q))


def step_count(length: float, dt: float) -> int:
    # guard against ceil(1000.0000000001) from rounding in length/dt
    return max(1, math.ceil(length / dt * (1 - 1e-12)))


def cn_steps_per_subproblem(T: float, P: int, dt: float, q: int = CN_ORDER) -> int:
    return step_count(T / P, dt / P ** (1.0 / (2 * q)))


class _CnStepper:
    def __init__(self, A: SparseOperator, dt: float):
        self.A = A
        self.dt = dt
        self.fac = factor_shifted(A, dt / 2)

    def step(self, u, g0, g1):
        rhs = u + 0.5 * self.dt * (self.A @ u) + 0.5 * self.dt * (g0 + g1)
        return self.fac.solve(rhs)


def cn_solve(A: SparseOperator, g, u_start, interval, dt: float, keep: str = "all"):
    """Crank-Nicolson on ``interval``; the last step is shortened if needed.

    Returns ``(waveform, n_steps)``.  ``keep="end"`` stores only the two
    endpoint states.
    """
    t0, t1 = interval
    u = np.asarray(u_start, dtype=float).copy()
    n_full = int(math.floor((t1 - t0) / dt * (1 + 1e-12)))
    rest = (t1 - t0) - n_full * dt
    if rest <= 1e-12 * max(1.0, t1 - t0):
        rest = 0.0
    times, states = [t0], [u.copy()]
    stepper = _CnStepper(A, dt)
    t = t0
    g_prev = np.asarray(g(t), dtype=float)
    for _ in range(n_full):
        g_next = np.asarray(g(t + dt), dtype=float)
        u = stepper.step(u, g_prev, g_next)
        t += dt
        g_prev = g_next
        if keep == "all":
            times.append(t)
            states.append(u.copy())
    steps = n_full
    if rest > 0:
        last = _CnStepper(A, rest)
        u = last.step(u, g_prev, np.asarray(g(t1), dtype=float))
        steps += 1
        if keep == "all":
            times.append(t1)
            states.append(u.copy())
    if keep != "all":
        times.append(t1)
        states.append(u.copy())
    times[-1] = t1
    return Waveform([(np.array(times), np.array(states))]), steps


@dataclass
class CnSubproblem(SubproblemSolution):
    steps: int = 0


def paraexp_cn_solve(
    ivp: LinearIVP,
    partition: Partition,
    cn: CnConfig,
    ebk_cfg: EbkConfig,
    mode: str = "emulated",
    clock=time.perf_counter,
) -> ParallelRun:
    """Paraexp with Crank-Nicolson for the nonhomogeneous legs."""
    g_hat, offset = shift_to_homogeneous(ivp)
    P = partition.P
    dt_par = cn.refined_dt(P)
    n = ivp.A.n
    node_sets = partition.node_sets

    def task(j):
        a, b = partition.interval(j)
        start = clock()
        wf, steps = cn_solve(ivp.A, g_hat, np.zeros(n), (a, b), dt_par, keep="end")
        end_state = wf.end_state()
        t1 = clock()
        segments = [(nodes, np.zeros((len(nodes), n))) for nodes in node_sets[: j - 1]]
        # nonhomogeneous leg is only stored at its endpoints
        own = node_sets[j - 1]
        vals = np.zeros((len(own), n))
        vals[-1] = end_state
        segments.append((own, vals))
        if j < P:
            hom = propagate_homogeneous(ivp.A, end_state, node_sets[j:], ebk_cfg)
            segments.extend(hom.segments)
        t2 = clock()
        return CnSubproblem(j, Waveform(segments), t1 - start, t2 - t1, [], steps)

    subs = run_tasks([lambda j=j: task(j) for j in range(1, P + 1)], mode)
    return ParallelRun(superpose(offset, subs), subs)


def cn_serial(ivp: LinearIVP, cn: CnConfig, clock=time.perf_counter):
    """Serial Crank-Nicolson over ``[0, T]``; returns ``(end_state, elapsed, steps)``."""
    start = clock()
    wf, steps = cn_solve(ivp.A, ivp.g, ivp.u0, (0.0, ivp.T), cn.dt, keep="end")
    u = wf.end_state()
    if ivp.offset is not None:
        u = u + ivp.offset
    return u, clock() - start, steps


def _rk4_linear_maps(A: np.ndarray, h: float):
    n = A.shape[0]
    I = np.eye(n)
    hA = h * A
    R = I + hA + hA @ hA / 2 + hA @ hA @ hA / 6 + hA @ hA @ hA @ hA / 24
    # contributions of g(t), g(t + h/2), g(t + h) to one RK4 step
    B0 = h / 6 * (I + hA + hA @ hA / 2 + hA @ hA @ hA / 4)
    Bm = h / 6 * (4 * I + 2 * hA + hA @ hA / 2)
    B1 = h / 6 * I
    return R, B0, Bm, B1


def brute_force_solve(ivp, n_steps: int, method: str = "rk4") -> np.ndarray:
    """End state at ``T`` from classical RK4 on the dense system.

    ``method="expm"`` is available for homogeneous linear problems.
    """
    A = ivp.A.toarray()
    n = A.shape[0]
    if n > 256:
        raise ValueError("dense reference solver is limited to n <= 256")
    T = ivp.T
    u = np.asarray(ivp.u0, dtype=float).copy()
    offset = getattr(ivp, "offset", None)
    h = T / n_steps
    if isinstance(ivp, LinearIVP):
        g0 = np.asarray(ivp.g(0.0), dtype=float)
        if method == "expm":
            if np.any(g0) or np.any(ivp.g(T)):
                raise ValueError("expm reference needs a homogeneous problem")
            u = dense_expm(T * A) @ u
        else:
            R, B0, Bm, B1 = _rk4_linear_maps(A, h)
            homogeneous = not np.any(g0) and not np.any(ivp.g(0.5 * T)) and not np.any(ivp.g(T))
            if homogeneous:
                u = np.linalg.matrix_power(R, n_steps) @ u
            else:
                g_prev = g0
                for i in range(n_steps):
                    t = i * h
                    gm = np.asarray(ivp.g(t + h / 2), dtype=float)
                    g1 = np.asarray(ivp.g(t + h), dtype=float)
                    u = R @ u + B0 @ g_prev + Bm @ gm + B1 @ g1
                    g_prev = g1
        return u if offset is None else u + offset
    if not isinstance(ivp, NonlinearIVP):
        raise TypeError("expected a LinearIVP or NonlinearIVP")

    def f(t, y):
        return A @ y + ivp.g(t, y)

    for i in range(n_steps):
        t = i * h
        k1 = f(t, u)
        k2 = f(t + h / 2, u + h / 2 * k1)
        k3 = f(t + h / 2, u + h / 2 * k2)
        k4 = f(t + h, u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u
