"""Semi-discrete model problems on the periodic unit interval.

Two PDEs are provided, the 1-D advection-diffusion equation (ADE) and the
viscous Burgers equation, both discretized with second-order central
differences on ``x_j = j*dx, j = 0..n-1`` (the periodic endpoint is not
duplicated).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import SparseOperator


class ForcingMode(str, enum.Enum):
    NONE = "none"
    CONTINUUM = "continuum"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class GridSpec:
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("a periodic grid needs at least 3 nodes")

    @classmethod
    def from_dx(cls, dx: float) -> GridSpec:
        n = round(1.0 / dx)
        if abs(n * dx - 1.0) > 1e-9:
            raise ValueError(f"1/dx must be an integer, got dx={dx}")
        return cls(n)

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx


@dataclass(frozen=True)
class AdeParams:
    a: float = 1.0
    nu: float = 1e-2

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("diffusivity must be nonnegative")


@dataclass(frozen=True, eq=False)
class LinearIVP:
    """``u' = A u + g(t)``, ``u(0) = u0`` on ``[0, T]``.

    ``offset`` is added back to the state when reassembling the physical
    solution (nonzero only for problems that were already shifted).
    """

    A: SparseOperator
    u0: np.ndarray
    g: Callable[[float], np.ndarray]
    T: float = 1.0
    offset: np.ndarray | None = None
    forcing: ForcingMode = ForcingMode.NONE
    exact: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        if len(self.u0) != self.A.n:
            raise ValueError("initial state does not match operator dimension")


@dataclass(frozen=True, eq=False)
class NonlinearIVP:
    """``u' = A u + g(t, u)`` with ``jac_g(u) = dg/du``."""

    A: SparseOperator
    g: Callable[[float, np.ndarray], np.ndarray]
    jac_g: Callable[[np.ndarray], SparseOperator]
    u0: np.ndarray
    T: float = 1.0
    forcing: ForcingMode = ForcingMode.NONE
    exact: Callable[[float], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)


def periodic_d1(grid: GridSpec) -> sp.csr_matrix:
    n, h = grid.n, grid.dx
    D = sp.diags([-1.0, 1.0, 1.0, -1.0], [-1, 1, -(n - 1), n - 1], shape=(n, n))
    return (D / (2 * h)).tocsr()


def periodic_d2(grid: GridSpec) -> sp.csr_matrix:
    n, h = grid.n, grid.dx
    D = sp.diags([1.0, -2.0, 1.0, 1.0, 1.0], [-1, 0, 1, -(n - 1), n - 1], shape=(n, n))
    return (D / h**2).tocsr()


def build_ade(grid: GridSpec, p: AdeParams) -> SparseOperator:
    return SparseOperator(p.nu * periodic_d2(grid) - p.a * periodic_d1(grid), "tridiagonal_periodic")


# -- advection-diffusion with a single pulse -------------------------------

def pulse(x) -> np.ndarray:
    return np.sin(np.pi * np.asarray(x)) ** 20


def advected_pulse(grid: GridSpec, a: float = 1.0) -> Callable[[float], np.ndarray]:
    """Source ``t -> pulse(x - a t)`` on the grid."""
    x = grid.x
    return lambda t: pulse(x - a * t)


@lru_cache(maxsize=1)
def _ade_series_coefficients() -> np.ndarray:
    # 64 panels of 10-point Gauss-Legendre on [-1, 1]; exact for the degree-40 trig integrand
    nodes, weights = np.polynomial.legendre.leggauss(10)
    edges = np.linspace(-1.0, 1.0, 65)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    xq = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wq = (half[:, None] * weights[None, :]).ravel()
    f = pulse(xq)
    coef = np.array([np.sum(wq * f * np.cos(k * np.pi * xq)) for k in range(21)])
    coef[0] *= 0.5
    return coef


def ade_exact(x, t: float, p: AdeParams) -> np.ndarray:
    """Fourier-series solution of the periodic pulse problem."""
    x = np.asarray(x, dtype=float)
    coef = _ade_series_coefficients()
    k = np.arange(21)
    decay = np.exp(-((k * np.pi) ** 2) * p.nu * t)
    return np.cos(np.pi * np.outer(x - p.a * t, k)) @ (coef * decay)


def pulse_ade_ivp(grid: GridSpec, p: AdeParams, T: float = 1.0) -> LinearIVP:
    """Pulse problem shifted to a zero initial state, ``v' = A v + A u0``."""
    A = build_ade(grid, p)
    u0 = pulse(grid.x)
    Au0 = A @ u0
    return LinearIVP(
        A=A,
        u0=np.zeros(grid.n),
        g=lambda t: Au0,
        T=T,
        offset=u0,
        exact=lambda t: ade_exact(grid.x, t, p),
    )


# -- manufactured solutions --------------------------------------------------

@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    """Analytic ``u(x, t)`` with the derivatives needed for a forcing term."""

    u: Callable
    u_t: Callable
    u_x: Callable
    u_xx: Callable
    name: str = ""


def traveling_pulses() -> ManufacturedSolution:
    k = 10 * np.pi
    return ManufacturedSolution(
        u=lambda x, t: 0.5 - 0.5 * np.cos(k * (x - t)),
        u_t=lambda x, t: -0.5 * k * np.sin(k * (x - t)),
        u_x=lambda x, t: 0.5 * k * np.sin(k * (x - t)),
        u_xx=lambda x, t: 0.5 * k**2 * np.cos(k * (x - t)),
        name="traveling-pulses",
    )


def smoothing_factor(k, eps: float) -> np.ndarray:
    z = np.pi * np.asarray(k, dtype=float) * eps / 2
    return np.where(z == 0, 1.0, z / np.sinh(np.where(z == 0, 1.0, z)))


def sawtooth_solution(xi, eps: float = 0.1, k_max: int = 100, deriv: int = 0) -> np.ndarray:
    """Smoothed sawtooth wave and its first two derivatives in ``xi``."""
    if eps <= 0 or k_max < 1:
        raise ValueError("need eps > 0 and k_max >= 1")
    xi = np.asarray(xi, dtype=float)
    k = np.arange(1, k_max + 1)
    phase = 2 * np.pi * np.multiply.outer(xi, k)
    amp = smoothing_factor(k, eps) / (np.pi * k)
    if deriv == 0:
        return 0.5 - np.sin(phase) @ amp
    if deriv == 1:
        return -np.cos(phase) @ (amp * 2 * np.pi * k)
    if deriv == 2:
        return np.sin(phase) @ (amp * (2 * np.pi * k) ** 2)
    raise ValueError("deriv must be 0, 1 or 2")


def sawtooth_wave(eps: float = 0.1, k_max: int = 100) -> ManufacturedSolution:
    # travels with speed 1/2: xi = x - t/2 + 1/2
    def xi(x, t):
        return np.asarray(x) - 0.5 * t + 0.5

    return ManufacturedSolution(
        u=lambda x, t: sawtooth_solution(xi(x, t), eps, k_max),
        u_t=lambda x, t: -0.5 * sawtooth_solution(xi(x, t), eps, k_max, 1),
        u_x=lambda x, t: sawtooth_solution(xi(x, t), eps, k_max, 1),
        u_xx=lambda x, t: sawtooth_solution(xi(x, t), eps, k_max, 2),
        name="sawtooth",
    )


def multiscale_solution(x, t, k0: int) -> np.ndarray:
    if k0 <= 1:
        raise ValueError("k0 must exceed 1")
    x = np.asarray(x, dtype=float)
    w, wk = 2 * np.pi, 2 * k0 * np.pi
    return np.sin(w * x) * np.sin(w * t) + np.sin(wk * x) * np.sin(wk * t) / k0


def multiscale(k0: int) -> ManufacturedSolution:
    if k0 <= 1:
        raise ValueError("k0 must exceed 1")
    w, wk = 2 * np.pi, 2 * k0 * np.pi
    return ManufacturedSolution(
        u=lambda x, t: multiscale_solution(x, t, k0),
        u_t=lambda x, t: w * np.sin(w * x) * np.cos(w * t) + wk / k0 * np.sin(wk * x) * np.cos(wk * t),
        u_x=lambda x, t: w * np.cos(w * x) * np.sin(w * t) + wk / k0 * np.cos(wk * x) * np.sin(wk * t),
        u_xx=lambda x, t: -(w**2) * np.sin(w * x) * np.sin(w * t)
        - wk**2 / k0 * np.sin(wk * x) * np.sin(wk * t),
        name=f"multiscale-k{k0}",
    )


def manufactured_forcing(
    solution: ManufacturedSolution,
    equation: str,
    params: dict,
    grid: GridSpec,
    mode: ForcingMode | str = ForcingMode.CONTINUUM,
) -> Callable[[float], np.ndarray]:
    """Forcing ``f(., t)`` on the grid that makes ``solution`` exact.

    ``continuum`` uses the analytic space derivatives, so the semi-discrete
    solution differs from ``solution`` by the discretization error.
    ``discrete`` uses the grid operators, so the sampled solution satisfies
    the semi-discrete system exactly.
    """
    mode = ForcingMode(mode)
    x = grid.x
    nu = params.get("nu", 0.0)
    a = params.get("a", 1.0)
    if equation not in ("ade", "burgers"):
        raise ValueError(f"unknown equation {equation!r}")
    if mode is ForcingMode.DISCRETE:
        D1, D2 = periodic_d1(grid), periodic_d2(grid)

    def f(t):
        ut = solution.u_t(x, t)
        if mode is ForcingMode.CONTINUUM:
            ux, uxx = solution.u_x(x, t), solution.u_xx(x, t)
            if equation == "ade":
                return ut + a * ux - nu * uxx
            return ut + solution.u(x, t) * ux - nu * uxx
        u = solution.u(x, t)
        if equation == "ade":
            return ut + a * (D1 @ u) - nu * (D2 @ u)
        return ut + u * (D1 @ u) - nu * (D2 @ u)

    return f


def traveling_pulse_ivp(
    grid: GridSpec, p: AdeParams = AdeParams(), T: float = 1.0, mode=ForcingMode.CONTINUUM
) -> LinearIVP:
    sol = traveling_pulses()
    f = manufactured_forcing(sol, "ade", {"a": p.a, "nu": p.nu}, grid, mode)
    x = grid.x
    return LinearIVP(
        A=build_ade(grid, p),
        u0=sol.u(x, 0.0),
        g=f,
        T=T,
        forcing=ForcingMode(mode),
        exact=lambda t: sol.u(x, t),
    )


def build_burgers(
    grid: GridSpec,
    nu: float = 1e-2,
    solution: ManufacturedSolution | None = None,
    mode: ForcingMode | str = ForcingMode.CONTINUUM,
    T: float = 1.0,
) -> NonlinearIVP:
    """Burgers in advective form: ``A = nu*D2``, ``g = -u*(D1 u) + f``."""
    D1 = periodic_d1(grid)
    A = SparseOperator(nu * periodic_d2(grid), "tridiagonal_periodic")
    x = grid.x
    if solution is None:
        mode = ForcingMode.NONE
        forcing = None
        u0 = np.zeros(grid.n)
        exact = None
    else:
        mode = ForcingMode(mode)
        forcing = manufactured_forcing(solution, "burgers", {"nu": nu}, grid, mode)
        u0 = solution.u(x, 0.0)

        def exact(t):
            return solution.u(x, t)

    def g(t, u):
        out = -u * (D1 @ u)
        if forcing is not None:
            out = out + forcing(t)
        return out

    def jac_g(u):
        J = -sp.diags(D1 @ u) - sp.diags(u) @ D1
        return SparseOperator(J.tocsr(), "tridiagonal_periodic")

    return NonlinearIVP(
        A=A, g=g, jac_g=jac_g, u0=u0, T=T, forcing=mode, exact=exact,
        meta={"nu": nu, "n": grid.n, "solution": solution.name if solution else None},
    )
