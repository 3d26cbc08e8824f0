import math

import numpy as np
import pytest

from multibump import assembly, solver, weight
from multibump.errors import (CertificationFailure, ScheduleExhausted,
                              WeightError)


def test_parse_symbols():
    assert solver.parse_symbols("110") == (1, 1, 0)
    assert solver.parse_symbols("1,0,1") == (1, 0, 1)
    assert solver.parse_symbols("1 0") == (1, 0)


def test_max_zero_run_cyclic():
    assert solver.max_zero_run((0, 1, 0), periodic=True) == 2
    assert solver.max_zero_run((0, 1, 0), periodic=False) == 1
    assert solver.max_zero_run((1, 1), periodic=True) == 0
    assert solver.max_zero_run((1, 0, 0, 1, 0), periodic=True) == 2


def test_make_window_validation():
    win = solver.make_window((1, 1, 0))
    assert win.k_bound == 1
    assert win.i_start == -1  # symmetric placement for odd length
    with pytest.raises(WeightError):
        solver.make_window(())
    with pytest.raises(WeightError):
        solver.make_window((0, 0))
    with pytest.raises(WeightError):
        solver.make_window((1, 2))
    with pytest.raises(WeightError):
        solver.make_window((1, 0, 0), k_bound=1)


def test_certified_single_bump(step_weight, consts):
    window = solver.make_window((1,))
    opts = solver.SolveOptions(cells_per_interval=300, consts=consts)
    sol = solver.solve_multibump(step_weight, window, 1e3, opts)
    rep = sol.report
    assert rep.certified
    assert rep.positivity
    assert rep.residual_inf <= 1e-9
    assert rep.dichotomy[0] == "large"
    assert not rep.failing()


def test_certified_alternating(sol_10, consts):
    rep = sol_10.report
    assert rep.certified
    assert rep.residual_inf <= 1e-9
    # coded interval carries a bump, uncoded stays small
    assert rep.dichotomy[0] == "large"
    assert rep.dichotomy[1] == "small"
    r2 = consts.r ** 2
    assert rep.interval_energies[0]["plus"] > r2
    assert rep.interval_energies[1]["plus"] < r2
    assert all(all(d.values()) for d in rep.condition_flags.values())


def test_certified_two_bumps(sol_110):
    rep = sol_110.report
    assert rep.certified
    labels = [rep.dichotomy[i] for i in sorted(rep.dichotomy)]
    assert labels == ["large", "large", "small"]
    # neighboring coded bumps look alike in energy
    keys = sorted(rep.interval_energies)
    e = rep.interval_energies
    assert math.isclose(e[keys[0]]["plus"], e[keys[1]]["plus"], rel_tol=0.05)


def test_positivity_everywhere(sol_10):
    assert np.all(sol_10.u.values > 0.0)
    # small interval max stays below the cap by a wide margin at mu = 1e3
    full = sol_10.u.full()
    a, b = sol_10.grid.interval_nodes(1, "plus")
    assert np.max(full[a:b + 1]) < 0.75


def test_certification_failure_carries_report(step_weight, consts):
    window = solver.make_window((1, 0))
    opts = solver.SolveOptions(cells_per_interval=200, consts=consts)
    with pytest.raises(CertificationFailure) as exc:
        solver.solve_multibump(step_weight, window, 0.5, opts)
    rep = exc.value.report
    assert rep is not None
    assert not rep.certified
    assert rep.failing()


def test_report_roundtrip(sol_10):
    d = sol_10.report.to_dict()
    assert d["certified"] is True
    assert d["mu"] == 1e3
    assert set(d["condition_flags"]) == {"C1", "C2", "C3", "C4"}
    assert isinstance(d["continuation_path"], list)
    assert d["continuation_path"][0][0] == 10.0


def test_continuation_states_reuse(step_weight, consts):
    window = solver.make_window((1, 0))
    opts = solver.SolveOptions(cells_per_interval=200, consts=consts)
    mus = [200.0, 800.0, 3200.0]
    seen = []
    for mu, gf, rep in solver.continuation_states(step_weight, window, mus,
                                                  opts):
        seen.append((mu, rep.certified, gf.sup_norm()))
    assert [m for m, _, _ in seen] == mus
    assert all(ok for _, ok, _ in seen)
    # sup norm grows mildly with mu while the small interval drains
    assert seen[-1][2] >= seen[0][2] - 0.1


def test_estimate_mu_star_bracket(step_weight, consts):
    opts = solver.SolveOptions(cells_per_interval=200, consts=consts)
    probes = [solver.make_window((1,)), solver.make_window((1, 0))]
    br = solver.estimate_mu_star(step_weight, 1, probes,
                                 schedule=[50.0, 100.0, 200.0], opts=opts)
    assert br.mu_pass in (50.0, 100.0, 200.0)
    assert br.mu_fail < br.mu_pass
    assert float(br) == br.mu_pass
    assert set(br.table) == {(1,), (1, 0)}
    for outcomes in br.table.values():
        assert [m for m, _ in outcomes] == [50.0, 100.0, 200.0]


def test_estimate_mu_star_exhausted(step_weight, consts):
    opts = solver.SolveOptions(cells_per_interval=200, consts=consts)
    probes = [solver.make_window((1, 0))]
    with pytest.raises(ScheduleExhausted):
        solver.estimate_mu_star(step_weight, 1, probes, schedule=[0.5],
                                opts=opts)


@pytest.mark.parametrize("code,mult", [((1,), 1), ((1, 0), 2), ((1, 1, 0), 3)])
def test_subharmonic_minimal_period(step_weight, consts, code, mult):
    window = solver.make_window(code)
    opts = solver.SolveOptions(cells_per_interval=200, consts=consts)
    sol, period = solver.subharmonic(step_weight, window, 400.0, opts)
    assert math.isclose(period, mult * step_weight.period, rel_tol=1e-12)


def test_auto_cells_monotone(step_weight):
    cells = [solver.auto_cells(step_weight, mu) for mu in (1e2, 1e3, 1e4, 1e6)]
    assert all(a <= b for a, b in zip(cells, cells[1:]))
    assert cells[0] >= 400
    assert cells[-1] <= 6000


def test_initial_guess_supports(step_weight, levels):
    window = solver.make_window((1, 0, 1), periodic=True)
    grid = assembly.span_grid(step_weight, window.i_start, 3, 40,
                              periodic=True)
    guess = solver.initial_guess(step_weight, window, levels.ground_bump(),
                                 grid)
    full = guess.full()
    for p, sym in enumerate(window.symbols):
        i = window.i_start + p
        a, b = grid.interval_nodes(i, "plus")
        m = np.max(np.abs(full[a:b + 1]))
        if sym:
            assert m > 1.0
        else:
            assert m == 0.0
