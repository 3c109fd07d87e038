"""Registered experiments and their CSV outputs."""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .baseline import CnConfig, cn_serial, paraexp_cn_solve
from .config import ConfigError, ExperimentConfig
from .ebk import EbkConfig
from .lowrank import SampleGrid, decay_report, decay_slopes
from .model import (
    AdeParams, GridSpec, advected_pulse, build_burgers, multiscale, pulse_ade_ivp,
    sawtooth_wave, traveling_pulse_ivp,
)
from .paraexp import Partition, RankRule, ebk_serial, paraexp_solve
from .report import TIMING_COLUMNS, RunReport, fit_convergence_order, relative_error, timing_row
from .wr import (
    EFFICIENCY_COLUMNS, HISTORY_COLUMNS, WrConfig, efficiency_rows, iterations_to_plateau, plateau_level,
    wr_run,
)

COMMON = {
    "tol": ("float", 1e-4),
    "restart_length": ("int", 20),
    "gamma_factor": ("float", 0.1),
    "max_krylov_dim": ("int", 4000),
    "node_kind": ("str", "chebyshev"),
    "timing": ("str", "emulated"),
    "seed": ("int", 0),
}

TIME_COLUMNS = ("tau0", "max_tau1", "max_tau2", "speedup", "efficiency", "iter_time_max", "total_time")


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    schema: dict
    run: Callable[[ExperimentConfig], list[RunReport]]
    check: Callable[[ExperimentConfig], None] | None = None


REGISTRY: dict[str, Experiment] = {}


def register(name: str, summary: str, schema: dict, check=None):
    def wrap(fn):
        REGISTRY[name] = Experiment(name, summary, {**COMMON, **schema}, fn, check)
        return fn

    return wrap


def ebk_config(cfg: ExperimentConfig) -> EbkConfig:
    return EbkConfig(
        tol=cfg["tol"], restart_length=cfg["restart_length"], gamma_factor=cfg["gamma_factor"],
        max_krylov_dim=cfg["max_krylov_dim"],
    )


def rank_rule(cfg: ExperimentConfig) -> RankRule:
    m = cfg["m"]
    return RankRule(m=m if m > 0 else None, tol=cfg["svd_tol"] if m <= 0 else None)


def validate(exp: Experiment, cfg: ExperimentConfig) -> None:
    """Checks shared by all experiments, then the experiment's own."""
    p = cfg.params
    if p["tol"] <= 0:
        raise ConfigError("tol must be positive")
    if p["restart_length"] < 1:
        raise ConfigError("restart_length must be >= 1")
    if p["gamma_factor"] <= 0:
        raise ConfigError("gamma_factor must be positive")
    if p["node_kind"] not in ("chebyshev", "uniform"):
        raise ConfigError("node_kind must be chebyshev or uniform")
    if p["timing"] not in ("emulated", "threaded"):
        raise ConfigError("timing must be emulated or threaded")
    for key in ("dx",):
        if key in p:
            _check_dx(p[key])
    for key in ("dx_list",):
        if key in p:
            for dx in p[key]:
                _check_dx(dx)
    if "P" in p and (not p["P"] or min(p["P"]) < 1):
        raise ConfigError("P must list positive integers")
    if "s" in p and p["s"] < 2:
        raise ConfigError("s must be >= 2")
    if "m" in p and "s" in p and p["m"] > p["s"]:
        raise ConfigError(f"m={p['m']} exceeds the number of samples s={p['s']}")
    if exp.check is not None:
        exp.check(cfg)


def _require(ok: bool, message: str) -> None:
    if not ok:
        raise ConfigError(message)


def _check_dx(dx):
    if dx <= 0:
        raise ConfigError("dx must be positive")
    n = 1.0 / dx
    if abs(n - round(n)) > 1e-8 * n or round(n) < 3:
        raise ConfigError(f"dx={dx} must divide the unit interval into at least 3 cells")


def _finish(reports, no_timing: bool):
    if no_timing:
        for r in reports:
            r.zero_timings(TIME_COLUMNS)
    return reports


# -- linear experiments ----------------------------------------------------

@register(
    "superposition",
    "ADE pulse solved with P subintervals against the P=1 solution",
    {"a": ("float", 1.0), "nu": ("float", 1e-2), "dx": ("float", 5e-3), "T": ("float", 1.0),
     "P": ("ints", [1, 2, 4, 8]), "s": ("int", 10), "m": ("int", 0), "svd_tol": ("float", 1e-12)},
)
def run_superposition(cfg: ExperimentConfig) -> list[RunReport]:
    grid = GridSpec.from_dx(cfg["dx"])
    ivp = pulse_ade_ivp(grid, AdeParams(cfg["a"], cfg["nu"]), cfg["T"])
    ebk, rank = ebk_config(cfg), rank_rule(cfg)
    exact = ivp.exact(ivp.T)
    report = RunReport(("P", "error", "difference", "max_tau1", "max_tau2"), name="superposition")
    base = None
    for P in sorted(set([1] + cfg["P"])):
        part = Partition.uniform(ivp.T, P, cfg["s"], cfg["node_kind"])
        run = paraexp_solve(ivp, part, ebk, rank, mode=cfg["timing"])
        u = run.waveform.end_state()
        base = u if P == 1 else base
        report.add(P=P, error=relative_error(u, exact), difference=relative_error(u, base),
                   max_tau1=max(run.tau1), max_tau2=max(run.tau2))
    return [report]


@register(
    "ade-convergence",
    "ADE pulse error against the mesh width for several tolerances",
    {"cases": ("pairs", [(0.0, 1e-2), (1.0, 0.0), (1.0, 1e-2)]), "tols": ("floats", [1e-2, 1e-4, 1e-6]),
     "dx_list": ("floats", [4e-3, 2e-3, 1e-3]), "T": ("float", 1.0), "s": ("int", 10), "m": ("int", 0),
     "svd_tol": ("float", 1e-12)},
    check=lambda cfg: _require(len(cfg["dx_list"]) >= 3, "ade-convergence needs at least three mesh widths"),
)
def run_ade_convergence(cfg: ExperimentConfig) -> list[RunReport]:
    errors = RunReport(("a", "nu", "tol", "dx", "error", "krylov_dim"), name="convergence")
    orders = RunReport(("a", "nu", "tol", "order"), name="orders")
    rank = rank_rule(cfg)
    for a, nu in cfg["cases"]:
        p = AdeParams(a, nu)
        for tol in cfg["tols"]:
            ebk = EbkConfig(tol=tol, restart_length=cfg["restart_length"], gamma_factor=cfg["gamma_factor"],
                            max_krylov_dim=cfg["max_krylov_dim"])
            errs = []
            for dx in cfg["dx_list"]:
                ivp = pulse_ade_ivp(GridSpec.from_dx(dx), p, cfg["T"])
                run = paraexp_solve(ivp, Partition.uniform(ivp.T, 1, cfg["s"], cfg["node_kind"]), ebk, rank)
                err = relative_error(run.waveform.end_state(), ivp.exact(ivp.T))
                errs.append(err)
                dim = sum(i.krylov_dim for i in run.subsolutions[0].info)
                errors.add(a=a, nu=nu, tol=tol, dx=dx, error=err, krylov_dim=dim)
            orders.add(a=a, nu=nu, tol=tol, order=fit_convergence_order(cfg["dx_list"], errs))
    return [errors, orders]


def efficiency_tables(cfg: ExperimentConfig, clock=time.perf_counter):
    """Weak-scaling timing tables: each subinterval has length ``dT`` and ``T = P dT``."""
    grid = GridSpec.from_dx(cfg["dx"])
    p = AdeParams(cfg["a"], cfg["nu"])
    ebk, rank = ebk_config(cfg), rank_rule(cfg)
    cn = CnConfig(cfg["dt"])
    pebk = RunReport(TIMING_COLUMNS + ("serial_error",), name="pebk")
    paraexp_cn = RunReport(TIMING_COLUMNS + ("serial_error", "cn_steps"), name="paraexp-cn")
    for P in cfg["P"]:
        T = P * cfg["dT"]
        ivp = traveling_pulse_ivp(grid, p, T)
        exact = ivp.exact(T)
        part = Partition.uniform(T, P, cfg["s"], cfg["node_kind"])
        best = None
        for _ in range(cfg["repeats"]):
            u_ser, tau0, _ = ebk_serial(ivp, part, ebk, rank, clock)
            run = paraexp_solve(ivp, part, ebk, rank, mode=cfg["timing"], clock=clock)
            t1, t2 = run.tau1, run.tau2
            if best is None:
                best = [tau0, t1, t2]
            else:
                best = [min(best[0], tau0), np.minimum(best[1], t1), np.minimum(best[2], t2)]
        err_ser = relative_error(u_ser.end_state(), exact)
        pebk.add(**timing_row(P, best[0], best[1], best[2], relative_error(run.waveform.end_state(), exact),
                              serial_error=err_ser))
        if cfg["baseline"]:
            best = None
            for _ in range(cfg["repeats"]):
                u_cn, tau0_cn, _ = cn_serial(ivp, cn, clock)
                run_cn = paraexp_cn_solve(ivp, part, cn, ebk, mode=cfg["timing"], clock=clock)
                if best is None:
                    best = [tau0_cn, run_cn.tau1, run_cn.tau2]
                else:
                    best = [min(best[0], tau0_cn), np.minimum(best[1], run_cn.tau1),
                            np.minimum(best[2], run_cn.tau2)]
            steps = {s.steps for s in run_cn.subsolutions}
            paraexp_cn.add(**timing_row(P, best[0], best[1], best[2],
                                        relative_error(run_cn.waveform.end_state(), exact),
                                        serial_error=relative_error(u_cn, exact), cn_steps=max(steps)))
    return [pebk, paraexp_cn] if cfg["baseline"] else [pebk]


register(
    "ade-efficiency",
    "weak-scaling timing table, PEBK against Paraexp with Crank-Nicolson",
    {"a": ("float", 1.0), "nu": ("float", 1e-2), "dx": ("float", 1e-3), "dT": ("float", 1.0),
     "P": ("ints", [2, 4, 8, 16, 32]), "s": ("int", 100), "m": ("int", 2), "svd_tol": ("float", 1e-12),
     "dt": ("float", 1e-3), "baseline": ("bool", True), "repeats": ("int", 1)},
    check=lambda cfg: _require(cfg["dt"] > 0 and cfg["repeats"] >= 1, "dt must be positive and repeats >= 1"),
)(efficiency_tables)


@register(
    "decay",
    "singular values of the advected-pulse source on shrinking windows",
    {"dx": ("float", 1e-2), "s": ("int", 32), "dT": ("float", 0.2), "halvings": ("int", 3)},
)
def run_decay(cfg: ExperimentConfig) -> list[RunReport]:
    g = advected_pulse(GridSpec.from_dx(cfg["dx"]))
    rows = decay_report(g, SampleGrid(0.0, cfg["dT"], cfg["s"], cfg["node_kind"]), cfg["halvings"])
    spectrum = RunReport(("dT", "j", "sigma"), name="decay")
    for r in rows:
        spectrum.add(dT=r.dT, j=r.j, sigma=r.sigma)
    slopes = RunReport(("j", "slope"), name="decay-slopes")
    for j, slope in decay_slopes(rows).items():
        slopes.add(j=j, slope=slope)
    return [spectrum, slopes]


# -- nonlinear experiments -------------------------------------------------

def _wr_configs(cfg):
    return (WrConfig(K=cfg["K"], wr_tol=cfg["wr_tol"], jacobian_mode=cfg["jacobian_mode"]),
            ebk_config(cfg), RankRule(m=cfg["m"]))


def _check_wr(cfg):
    if cfg["K"] < 1:
        raise ConfigError("K must be >= 1")
    if cfg["jacobian_mode"] not in ("none", "averaged"):
        raise ConfigError("jacobian_mode must be none or averaged")
    if cfg["forcing"] not in ("continuum", "discrete"):
        raise ConfigError("forcing must be continuum or discrete")
    if cfg["m"] < 1:
        raise ConfigError("m must be >= 1 for nonlinear runs")


WR_SCHEMA = {
    "nu": ("float", 1e-2), "forcing": ("str", "continuum"), "s": ("int", 50), "m": ("int", 12),
    "K": ("int", 10), "wr_tol": ("float", 0.0), "jacobian_mode": ("str", "averaged"),
}


def _history_rows(report: RunReport, result, **extra):
    for row in result.report.rows:
        report.add(**extra, **row)


def _check_burgers_wave(cfg):
    _check_wr(cfg)
    if cfg["horizon"] not in ("fixed_dT", "fixed_T"):
        raise ConfigError("horizon must be fixed_dT or fixed_T")


@register(
    "burgers-wave",
    "WR error history for the smoothed sawtooth wave",
    {**WR_SCHEMA, "eps": ("float", 0.1), "k_max": ("int", 100), "dx_list": ("floats", [1e-2, 5e-3, 2.5e-3]),
     "P": ("ints", [1]), "dT": ("float", 0.1), "T": ("float", 0.1), "horizon": ("str", "fixed_dT")},
    check=_check_burgers_wave,
)
def run_burgers_wave(cfg: ExperimentConfig) -> list[RunReport]:
    wr_cfg, ebk, rank = _wr_configs(cfg)
    history = RunReport(("dx",) + HISTORY_COLUMNS, name="history")
    summary = RunReport(("dx", "P", "plateau", "iterations"), name="summary")
    sol = sawtooth_wave(cfg["eps"], cfg["k_max"])
    for dx in cfg["dx_list"]:
        grid = GridSpec.from_dx(dx)
        for P in cfg["P"]:
            T = P * cfg["dT"] if cfg["horizon"] == "fixed_dT" else cfg["T"]
            ivp = build_burgers(grid, cfg["nu"], sol, cfg["forcing"], T)
            part = Partition.uniform(T, P, cfg["s"], cfg["node_kind"])
            res = wr_run(ivp, part, wr_cfg, ebk, rank, mode=cfg["timing"])
            _history_rows(history, res, dx=dx)
            summary.add(dx=dx, P=P, plateau=plateau_level(res.errors), iterations=iterations_to_plateau(res.errors))
    return [history, summary]


@register(
    "burgers-efficiency",
    "timing of ten WR iterations with fixed T and s/P samples per subinterval",
    {**WR_SCHEMA, "nus": ("floats", [1e-1, 1e-2]), "eps": ("float", 0.1), "k_max": ("int", 100),
     "dx": ("float", 2e-3), "T": ("float", 0.2), "P": ("ints", [1, 2, 4, 8]), "s_total": ("int", 128)},
    check=lambda cfg: (_check_wr(cfg), _require(1 in cfg["P"], "burgers-efficiency needs P=1 in the P list")),
)
def run_burgers_efficiency(cfg: ExperimentConfig) -> list[RunReport]:
    wr_cfg, ebk, rank = _wr_configs(cfg)
    grid = GridSpec.from_dx(cfg["dx"])
    sol = sawtooth_wave(cfg["eps"], cfg["k_max"])
    history = RunReport(("nu",) + HISTORY_COLUMNS, name="history")
    efficiency = RunReport(("nu",) + EFFICIENCY_COLUMNS, name="efficiency")
    for nu in cfg["nus"]:
        ivp = build_burgers(grid, nu, sol, cfg["forcing"], cfg["T"])
        results, counts = {}, {}
        for P in sorted(cfg["P"]):
            s = max(2, cfg["s_total"] // P)
            part = Partition.uniform(cfg["T"], P, s, cfg["node_kind"])
            res = wr_run(ivp, part, wr_cfg, ebk, RankRule(m=min(rank.m, s)), mode=cfg["timing"])
            results[P] = res
            counts[P] = iterations_to_plateau(res.errors)
            _history_rows(history, res, nu=nu)
        for row in efficiency_rows(results, counts).rows:
            efficiency.add(nu=nu, **row)
    return [history, efficiency]


@register(
    "multiscale",
    "WR error history for the two-scale manufactured solution",
    {**WR_SCHEMA, "k0_list": ("ints", [4, 16]), "dx": ("float", 2.5e-3), "dT": ("float", 0.1),
     "P": ("ints", [1, 2, 4])},
    check=lambda cfg: (_check_wr(cfg), _require(min(cfg["k0_list"]) > 1, "every k0 must exceed 1")),
)
def run_multiscale(cfg: ExperimentConfig) -> list[RunReport]:
    wr_cfg, ebk, rank = _wr_configs(cfg)
    grid = GridSpec.from_dx(cfg["dx"])
    history = RunReport(("k0",) + HISTORY_COLUMNS, name="history")
    summary = RunReport(("k0", "P", "plateau", "iterations"), name="summary")
    for k0 in cfg["k0_list"]:
        for P in cfg["P"]:
            T = P * cfg["dT"]
            ivp = build_burgers(grid, cfg["nu"], multiscale(k0), cfg["forcing"], T)
            res = wr_run(ivp, Partition.uniform(T, P, cfg["s"], cfg["node_kind"]), wr_cfg, ebk, rank,
                         mode=cfg["timing"])
            _history_rows(history, res, k0=k0)
            summary.add(k0=k0, P=P, plateau=plateau_level(res.errors), iterations=iterations_to_plateau(res.errors))
    return [history, summary]


def run_experiment(cfg: ExperimentConfig, out_dir=None, no_timing: bool = False) -> list[RunReport]:
    """Validate, run and (optionally) write ``<out_dir>/<experiment>-<table>.csv``."""
    if cfg.experiment not in REGISTRY:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; try one of {', '.join(REGISTRY)}")
    exp = REGISTRY[cfg.experiment]
    validate(exp, cfg)
    reports = _finish(exp.run(cfg), no_timing)
    if out_dir is not None:
        for r in reports:
            r.write_csv(Path(out_dir) / f"{cfg.experiment}-{r.name}.csv")
    return reports
