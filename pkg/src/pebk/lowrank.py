"""Truncated-SVD approximation of a time-dependent source, g(t) ~ U p(t)."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.interpolate import CubicSpline

from .linalg import thin_svd

NodeKind = Literal["chebyshev", "uniform"]


class SourceSampleError(ValueError):
    pass


@dataclass(frozen=True)
class SampleGrid:
    t_start: float
    t_end: float
    s: int
    node_kind: NodeKind = "chebyshev"

    def __post_init__(self):
        if self.s < 2:
            raise ValueError("need at least two sample points")
        if not self.t_end > self.t_start:
            raise ValueError("sample interval must have positive length")
        if self.node_kind not in ("chebyshev", "uniform"):
            raise ValueError(f"unknown node kind {self.node_kind!r}")

    @property
    def nodes(self) -> np.ndarray:
        a, b = self.t_start, self.t_end
        if self.node_kind == "uniform":
            t = np.linspace(a, b, self.s)
        else:
            # Chebyshev extrema, endpoints included
            t = 0.5 * (a + b) - 0.5 * (b - a) * np.cos(np.pi * np.arange(self.s) / (self.s - 1))
        t[0], t[-1] = a, b
        return t

    @property
    def length(self) -> float:
        return self.t_end - self.t_start


def sample_source(g: Callable[[float], np.ndarray], grid: SampleGrid) -> np.ndarray:
    cols = []
    for t in grid.nodes:
        col = np.asarray(g(t), dtype=float)
        if not np.all(np.isfinite(col)):
            raise SourceSampleError(f"source is not finite at t={t!r}")
        cols.append(col)
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class LowRankSource:
    U: np.ndarray
    nodes: np.ndarray
    coeff_samples: np.ndarray  # (s, m)
    singular_values: np.ndarray

    def __post_init__(self):
        spline = CubicSpline(self.nodes, self.coeff_samples, axis=0) if self.m else None
        object.__setattr__(self, "_spline", spline)

    @property
    def m(self) -> int:
        return self.U.shape[1]

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def t_start(self) -> float:
        return float(self.nodes[0])

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    def coeffs(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        span = self.t_end - self.t_start
        slack = 1e-12 * max(span, 1.0)
        if np.any(t < self.t_start - slack) or np.any(t > self.t_end + slack):
            raise ValueError(f"t outside [{self.t_start}, {self.t_end}]; no extrapolation")
        if not self.m:
            return np.zeros(t.shape + (0,))
        return self._spline(np.clip(t, self.t_start, self.t_end))

    def evaluate(self, t) -> np.ndarray:
        return self.U @ self.coeffs(t).T if np.ndim(t) else self.U @ self.coeffs(t)

    def piece_coefficients(self) -> np.ndarray:
        """Local power-basis coefficients per node interval, shape ``(s-1, 4, m)``.

        Entry ``[i, k]`` multiplies ``(t - nodes[i])**k``.
        """
        if not self.m:
            return np.zeros((len(self.nodes) - 1, 4, 0))
        return np.transpose(self._spline.c[::-1], (1, 0, 2))

    @classmethod
    def constant(cls, vec, nodes) -> LowRankSource:
        vec = np.asarray(vec, dtype=float)
        nodes = np.asarray(nodes, dtype=float)
        norm = np.linalg.norm(vec)
        if norm == 0:
            return cls(np.zeros((len(vec), 0)), nodes, np.zeros((len(nodes), 0)), np.zeros(1))
        return cls((vec / norm)[:, None], nodes, np.full((len(nodes), 1), norm), np.array([norm]))

    @classmethod
    def zero(cls, n, nodes) -> LowRankSource:
        nodes = np.asarray(nodes, dtype=float)
        return cls(np.zeros((n, 0)), nodes, np.zeros((len(nodes), 0)), np.zeros(1))


def resolve_rank(singular_values, m: int | None = None, tol: float | None = None) -> int:
    sv = np.asarray(singular_values)
    if sv.size == 0 or sv[0] == 0:
        return 0
    if m is not None:
        if m > sv.size:
            raise ValueError(f"rank {m} exceeds the number of samples {sv.size}")
        return int(m)
    if tol is None:
        raise ValueError("give either a fixed rank or a truncation tolerance")
    rel = sv / sv[0]
    for k in range(1, sv.size):
        if rel[k] <= tol:
            return k
    return int(sv.size)


def build_low_rank(G, grid: SampleGrid, m: int | None = None, tol: float | None = None) -> LowRankSource:
    """Truncated SVD of the samples with cubic coefficient functions.

    The coefficient samples are the rows of ``diag(sigma) V^T`` restricted to
    the retained rank; they are interpolated (not-a-knot) through the nodes.
    """
    G = np.asarray(G, dtype=float)
    nodes = grid.nodes
    if G.shape[1] != len(nodes):
        raise ValueError("sample matrix and grid disagree on the number of samples")
    svd = thin_svd(G)
    sv = svd.singular_values
    k = resolve_rank(sv, m, tol)
    if k == 0:
        return LowRankSource(np.zeros((G.shape[0], 0)), nodes, np.zeros((len(nodes), 0)), sv)
    coeff = (svd.V[:, :k] * sv[:k])  # (s, k): row i is the coefficient vector at node i
    return LowRankSource(svd.U[:, :k], nodes, coeff, sv)


def low_rank_source(g, grid: SampleGrid, m: int | None = None, tol: float | None = None) -> LowRankSource:
    return build_low_rank(sample_source(g, grid), grid, m=m, tol=tol)


def midpoints(nodes) -> np.ndarray:
    nodes = np.asarray(nodes)
    return 0.5 * (nodes[1:] + nodes[:-1])


def approximation_error(src: LowRankSource, g, validation=None) -> float:
    """Max relative 2-norm error of ``U p(t)`` on points between the nodes."""
    ts = midpoints(src.nodes) if validation is None else np.asarray(validation, dtype=float)
    if np.any(np.isin(ts, src.nodes)):
        raise ValueError("validation points must avoid the sample nodes")
    num, den = 0.0, 0.0
    for t in ts:
        gt = np.asarray(g(t), dtype=float)
        num = max(num, np.linalg.norm(gt - src.evaluate(t)))
        den = max(den, np.linalg.norm(gt))
    for t in src.nodes:
        den = max(den, np.linalg.norm(g(t)))
    return num / den if den > 0 else num


@dataclass(frozen=True)
class DecayRow:
    dT: float
    j: int
    sigma: float


def decay_report(g, base_grid: SampleGrid, halvings: int) -> list[DecayRow]:
    """Singular spectra of the samples on ``[t0, t0 + dT/2**h]`` for ``h = 0..halvings``."""
    rows = []
    for h in range(halvings + 1):
        dT = base_grid.length / 2**h
        grid = SampleGrid(base_grid.t_start, base_grid.t_start + dT, base_grid.s, base_grid.node_kind)
        sv = thin_svd(sample_source(g, grid)).singular_values
        rows.extend(DecayRow(dT, j + 1, float(s)) for j, s in enumerate(sv))
    return rows


def decay_slopes(rows: list[DecayRow], orders=(1, 2, 3)) -> dict[int, float]:
    """Least-squares log-log slope of ``sigma_{j+1}`` against the interval length."""
    out = {}
    for j in orders:
        pts = sorted((r.dT, r.sigma) for r in rows if r.j == j + 1)
        x = np.log([p[0] for p in pts])
        y = np.log([max(p[1], np.finfo(float).tiny) for p in pts])
        out[j] = float(np.polyfit(x, y, 1)[0])
    return out


def write_decay_csv(rows: list[DecayRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dT", "j", "sigma"])
        for r in rows:
            w.writerow([f"{r.dT:.6e}", r.j, f"{r.sigma:.6e}"])
