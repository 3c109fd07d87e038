"""Vector-valued trajectories stored as per-subinterval node samples."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


class GridMismatchError(ValueError):
    pass


@dataclass(eq=False)
class Segment:
    nodes: np.ndarray
    values: np.ndarray  # (len(nodes), n)
    _spline: CubicSpline | None = field(default=None, repr=False)

    def __call__(self, t):
        if self._spline is None:
            self._spline = CubicSpline(self.nodes, self.values, axis=0)
        return self._spline(t)


class Waveform:
    """Piecewise trajectory on ``[t_0, t_P]``.

    Each segment holds the state at its sample nodes (both endpoints
    included); values between nodes come from a not-a-knot cubic spline
    through that segment's nodes.
    """

    def __init__(self, segments):
        segs = [s if isinstance(s, Segment) else Segment(np.asarray(s[0], float), np.asarray(s[1], float)) for s in segments]
        if not segs:
            raise ValueError("waveform needs at least one segment")
        for a, b in zip(segs, segs[1:]):
            if not np.isclose(a.nodes[-1], b.nodes[0], rtol=0, atol=1e-12 * max(1.0, abs(b.nodes[0]))):
                raise ValueError("segments must be contiguous")
        self.segments = segs
        self._ends = [float(s.nodes[-1]) for s in segs]

    @classmethod
    def zeros(cls, node_sets, n: int) -> Waveform:
        return cls([(nodes, np.zeros((len(nodes), n))) for nodes in node_sets])

    @classmethod
    def constant(cls, node_sets, vec) -> Waveform:
        vec = np.asarray(vec, dtype=float)
        return cls([(nodes, np.tile(vec, (len(nodes), 1))) for nodes in node_sets])

    @property
    def n(self) -> int:
        return self.segments[0].values.shape[1]

    @property
    def t_start(self) -> float:
        return float(self.segments[0].nodes[0])

    @property
    def t_end(self) -> float:
        return self._ends[-1]

    @property
    def node_sets(self) -> list[np.ndarray]:
        return [s.nodes for s in self.segments]

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([self.t_start] + self._ends)

    def end_state(self) -> np.ndarray:
        return self.segments[-1].values[-1].copy()

    def stacked(self) -> np.ndarray:
        return np.vstack([s.values for s in self.segments])

    def segment_index(self, t: float) -> int:
        slack = 1e-12 * max(1.0, abs(t))
        if t < self.t_start - slack or t > self.t_end + slack:
            raise ValueError(f"t={t} outside [{self.t_start}, {self.t_end}]")
        return min(bisect.bisect_left(self._ends, t - slack), len(self.segments) - 1)

    def __call__(self, t: float) -> np.ndarray:
        return self.evaluate(t)

    def evaluate(self, t: float) -> np.ndarray:
        seg = self.segments[self.segment_index(t)]
        hit = np.flatnonzero(seg.nodes == t)
        if hit.size:
            return seg.values[hit[0]].copy()
        return seg(t)

    def _check_compatible(self, other: Waveform):
        if len(self.segments) != len(other.segments) or any(
            a.nodes.shape != b.nodes.shape or not np.allclose(a.nodes, b.nodes, rtol=0, atol=1e-13)
            for a, b in zip(self.segments, other.segments)
        ):
            raise GridMismatchError("waveforms live on different sample grids")

    def __add__(self, other: Waveform) -> Waveform:
        self._check_compatible(other)
        return Waveform([(a.nodes, a.values + b.values) for a, b in zip(self.segments, other.segments)])

    def __sub__(self, other: Waveform) -> Waveform:
        self._check_compatible(other)
        return Waveform([(a.nodes, a.values - b.values) for a, b in zip(self.segments, other.segments)])

    def shifted(self, vec) -> Waveform:
        vec = np.asarray(vec, dtype=float)
        return Waveform([(s.nodes, s.values + vec) for s in self.segments])

    def norm(self) -> float:
        """Frobenius norm over all stored node states."""
        return float(np.linalg.norm(self.stacked()))
