import numpy as np
import pytest

import pebk.wr as wr
from pebk.ebk import EbkConfig
from pebk.model import (
    AdeParams, GridSpec, LinearIVP, build_ade, build_burgers, pulse, sawtooth_wave, traveling_pulses,
)
from pebk.paraexp import Partition, RankRule, SubproblemSolution, paraexp_solve
from pebk.report import relative_error
from pebk.waveform import Waveform
from pebk.wr import (
    WrConfig, WrDivergenceError, WrResult, as_nonlinear, average_jacobian, efficiency_rows,
    iterations_to_plateau, iterations_to_reach, plateau_level, trapezoid_weights, wr_operators,
    wr_parallel_step, wr_run, wr_source,
)


def test_trapezoid_weights_integrate_linear_functions():
    nodes = np.array([0.0, 0.1, 0.4, 1.0])
    w = trapezoid_weights(nodes)
    assert w.sum() == pytest.approx(1.0)
    assert w @ (3 * nodes + 2) == pytest.approx(3.5)


def test_config_validation():
    for kw in ({"K": 0}, {"wr_tol": -1.0}, {"jacobian_mode": "exact"}):
        with pytest.raises(ValueError):
            WrConfig(**kw)


def test_constant_iterate_gives_its_own_jacobian():
    g = GridSpec(24)
    ivp = build_burgers(g, 1e-2)
    part = Partition.uniform(0.3, 3, s=5)
    u = np.sin(2 * np.pi * g.x)
    J = average_jacobian(ivp, Waveform.constant(part.node_sets, u), part)
    assert len(J) == 3
    for j in range(1, 4):
        np.testing.assert_allclose(J[j].toarray(), ivp.jac_g(u).toarray(), atol=1e-13)
    zero = average_jacobian(ivp, Waveform.constant(part.node_sets, np.zeros(24)), part)
    assert not np.any(zero[1].toarray())


def test_average_of_linear_waveform_is_midpoint_jacobian():
    # jac_g is linear in u, and the trapezoid rule is exact for u linear in t
    g = GridSpec(20)
    ivp = build_burgers(g, 1e-2)
    part = Partition.uniform(1.0, 2, s=7)
    a, b = np.cos(2 * np.pi * g.x), np.sin(4 * np.pi * g.x)
    wf = Waveform([(ns, np.array([a + t * b for t in ns])) for ns in part.node_sets])
    J = average_jacobian(ivp, wf, part)
    np.testing.assert_allclose(J[1].toarray(), ivp.jac_g(a + 0.25 * b).toarray(), atol=1e-12)
    np.testing.assert_allclose(J[2].toarray(), ivp.jac_g(a + 0.75 * b).toarray(), atol=1e-12)
    serial = average_jacobian(ivp, wf, part, serial=True)
    assert serial[1] is serial[2]
    np.testing.assert_allclose(serial[1].toarray(), ivp.jac_g(a + 0.5 * b).toarray(), atol=1e-12)
    ops = wr_operators(ivp, serial, 2)
    assert ops[0] is ops[1]


def test_source_forms():
    g = GridSpec(16)
    ivp = build_burgers(g, 1e-2)
    part = Partition.uniform(0.2, 2, s=4)
    u0 = pulse(g.x)
    uk = np.cos(2 * np.pi * g.x)
    wf = Waveform.constant(part.node_sets, uk)
    picard = wr_source(ivp, wf, None, u0)
    np.testing.assert_allclose(picard(0.05), ivp.A @ u0 + ivp.g(0.05, uk))
    J = average_jacobian(ivp, wf, part)
    corrected = wr_source(ivp, wf, J, u0)
    np.testing.assert_allclose(corrected(0.05), ivp.A @ u0 + ivp.g(0.05, uk) + J[1] @ (u0 - uk))
    # at a shared boundary the caller picks the subinterval
    np.testing.assert_allclose(corrected(0.1, 2), ivp.A @ u0 + ivp.g(0.1, uk) + J[2] @ (u0 - uk))


def test_linear_problem_degenerates_to_paraexp():
    g = GridSpec(80)
    A = build_ade(g, AdeParams(1.0, 1e-2))
    lin = LinearIVP(A=A, u0=pulse(g.x), g=lambda t: np.sin(2 * np.pi * (g.x - t)), T=0.5)
    part = Partition.uniform(0.5, 4, s=10)
    cfg = EbkConfig(tol=1e-8)
    rank = RankRule(tol=1e-12)
    ref = paraexp_solve(lin, part, cfg, rank).waveform
    u0_wave = Waveform.constant(part.node_sets, lin.u0)
    for mode in ("averaged", "none"):
        step, subs = wr_parallel_step(as_nonlinear(lin), u0_wave, part, WrConfig(jacobian_mode=mode), cfg, rank)
        assert len(subs) == 4
        assert relative_error(step.stacked(), ref.stacked()) <= 10 * cfg.tol


def test_offset_problems_are_not_viewed_as_nonlinear():
    g = GridSpec(8)
    ivp = LinearIVP(A=build_ade(g, AdeParams()), u0=np.zeros(8), g=lambda t: np.zeros(8), offset=np.ones(8))
    with pytest.raises(ValueError):
        as_nonlinear(ivp)


def test_exact_solution_is_a_fixed_point_with_discrete_forcing():
    g = GridSpec(64)
    sol = traveling_pulses()
    T = 0.2
    ivp = build_burgers(g, 1e-2, sol, "discrete", T)
    # the residual also contains the cubic-in-time source error, O(h^4) in the sample spacing
    part = Partition.uniform(T, 2, s=48)
    exact = Waveform([(ns, np.array([ivp.exact(t) for t in ns])) for ns in part.node_sets])
    tol = 1e-8
    res = wr_run(ivp, part, WrConfig(K=1), EbkConfig(tol=tol), RankRule(m=12), initial=exact)
    assert res.changes[0] <= 10 * tol
    assert res.errors[0] <= 10 * tol


def test_jacobian_mode_converges_and_beats_picard():
    g = GridSpec(128)
    ivp = build_burgers(g, 1e-2, sawtooth_wave(0.1, 100), "continuum", T=0.1)
    part = Partition.uniform(0.1, 1, s=50)
    runs = {mode: wr_run(ivp, part, WrConfig(K=8, jacobian_mode=mode), EbkConfig(tol=1e-4), RankRule(m=12))
            for mode in ("averaged", "none")}
    avg, pic = runs["averaged"], runs["none"]
    assert avg.iterations == 8 and len(avg.report.rows) == 8
    level = 2 * plateau_level(avg.errors)
    k_avg = iterations_to_reach(avg.errors, level)
    try:
        k_pic = iterations_to_reach(pic.errors, level)
    except ValueError:
        k_pic = np.inf
    assert k_avg <= k_pic
    # iterate changes shrink faster than geometrically early on
    d = np.asarray(avg.changes)
    assert (d[3] / d[2]) / (d[1] / d[0]) < 1


def test_wr_tol_stops_early():
    g = GridSpec(64)
    ivp = build_burgers(g, 1e-1, sawtooth_wave(0.1, 20), "continuum", T=0.05)
    part = Partition.uniform(0.05, 1, s=20)
    res = wr_run(ivp, part, WrConfig(K=20, wr_tol=1e-6), EbkConfig(tol=1e-8), RankRule(m=12))
    assert res.iterations < 20 and res.changes[-1] <= 1e-6
    assert res.total_time == pytest.approx(sum(res.iter_times))


def test_divergence_is_reported(monkeypatch):
    g = GridSpec(16)
    ivp = build_burgers(g, 1e-2, sawtooth_wave(0.1, 10), "continuum", T=0.1)
    part = Partition.uniform(0.1, 1, s=4)
    calls = {"k": 0}

    def exploding(ivp, u, *args, **kwargs):
        # the iterate change grows by 1e4 per sweep
        calls["k"] += 1
        new = u.shifted(np.full(16, 10.0 ** (4 * calls["k"]) * (-1) ** calls["k"]))
        return new, [SubproblemSolution(1, new, 0.0, 0.0)]

    monkeypatch.setattr(wr, "wr_parallel_step", exploding)
    with pytest.raises(WrDivergenceError) as err:
        wr_run(ivp, part, WrConfig(K=10), EbkConfig())
    assert err.value.iteration >= 2


def test_plateau_helpers():
    errors = [1.0, 0.1, 0.02, 0.011, 0.010, 0.0101]
    assert plateau_level(errors) == pytest.approx(0.0101)
    assert iterations_to_plateau(errors) == 3
    assert iterations_to_reach(errors, 0.5) == 2
    with pytest.raises(ValueError):
        iterations_to_reach(errors, 1e-3)


def test_efficiency_rows_follow_definitions():
    def result(times):
        return WrResult(None, [], [], None, times)

    results = {1: result([4.0, 4.0]), 2: result([1.5, 1.5]), 4: result([1.0, 1.0])}
    report = efficiency_rows(results, {1: 6, 2: 6, 4: 8})
    rows = {r["P"]: r for r in report.rows}
    assert rows[1]["speedup"] == 1.0
    for P, r in rows.items():
        assert r["speedup"] == 8.0 / r["total_time"]
        assert r["efficiency"] == r["speedup"] / P
    assert rows[4]["efficiency_bound"] == 6 / 8
