"""Run reports, error measures and CSV output."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TIMING_COLUMNS = ("P", "tau0", "max_tau1", "max_tau2", "error", "speedup", "efficiency")


def relative_error(u_num, u_exact) -> float:
    u_num = np.asarray(u_num, dtype=float)
    u_exact = np.asarray(u_exact, dtype=float)
    if u_num.shape != u_exact.shape:
        raise ValueError(f"shape mismatch {u_num.shape} vs {u_exact.shape}")
    ref = np.linalg.norm(u_exact)
    if ref == 0:
        raise ZeroDivisionError("exact solution has zero norm")
    return float(np.linalg.norm(u_num - u_exact) / ref)


def fit_convergence_order(h, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(h) < 3 or len(h) != len(errors):
        raise ValueError("need at least three (h, error) pairs")
    if np.any(errors <= 0) or np.any(h <= 0):
        raise ValueError("errors and mesh widths must be positive")
    return float(np.polyfit(np.log(h), np.log(errors), 1)[0])


def speedup(tau0: float, max_tau1: float, max_tau2: float) -> float:
    denom = max_tau1 + max_tau2
    return tau0 / denom if denom > 0 else float("nan")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6e}"
    return str(v)


@dataclass
class RunReport:
    """Rows of one experiment table with a fixed column order."""

    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    name: str = "report"

    def add(self, **row) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"row is missing columns {sorted(missing)}")
        self.rows.append(row)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def zero_timings(self, timing_columns) -> None:
        for r in self.rows:
            for c in timing_columns:
                if c in r:
                    r[c] = 0.0

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([format_value(r[c]) for c in self.columns])
        return path


def timing_row(P, tau0, tau1s, tau2s, error, **extra) -> dict:
    t1, t2 = max(tau1s), max(tau2s)
    sp = speedup(tau0, t1, t2)
    return dict(P=P, tau0=tau0, max_tau1=t1, max_tau2=t2, error=error, speedup=sp,
                efficiency=sp / P, **extra)
