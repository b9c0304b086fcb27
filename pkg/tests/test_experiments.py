import math

import numpy as np
import pytest

from beltflow.experiments import (CSV_COLUMNS, SCENARIOS, ErrorReport, builtin_scenario, convergence_study,
                                  is_monotone, l2_error, mass_defect, observed_order, reports_to_csv)
from beltflow.network import JunctionKind
from beltflow.profiles import Zero
from beltflow.solver import CFLViolation, make_grids, simulate

from conftest import reference_run


def test_builtin_parameterizations():
    s1, s2 = builtin_scenario("test1"), builtin_scenario("test2")
    assert [s1.network.arcs[a].velocity for a in "12"] == [1, 2]
    assert [s2.network.arcs[a].velocity for a in "12"] == [2, 1]
    assert s2.horizon >= 1.7
    s5 = builtin_scenario("test5_merge")
    assert s5.network.junction("J").kind is JunctionKind.MERGE and s5.network.junction("J").q == 0.3
    assert isinstance(s5.profiles["3"], Zero) and s5.horizon == 4.0
    for name in ("test3_passive", "test4_active"):
        sc = builtin_scenario(name)
        assert [sc.network.arcs[a].velocity for a in "123"] == [4, 1, 2]
        assert sc.network.junction("J").mu == 0.5 and sc.horizon == 2.0
    with pytest.raises(KeyError):
        builtin_scenario("test9")


@pytest.mark.parametrize("name", SCENARIOS)
def test_builtins_respect_cfl(name):
    sc = builtin_scenario(name)
    sc.check_cfl()
    assert sc.times().min() >= 0 and sc.times().max() <= sc.horizon


def test_output_times_must_lie_in_horizon():
    with pytest.raises(ValueError):
        builtin_scenario("test2", output_times=[0.5, 3.0])


def test_l2_error_is_zero_on_equality_and_symmetric():
    sc, _, traj = reference_run("test1")
    assert l2_error(traj, traj) == 0.0
    other = builtin_scenario("test1", dt=5e-6).run()
    assert l2_error(traj, other) == l2_error(other, traj) > 0


def test_l2_error_against_its_own_samples_is_zero():
    sc, oracle, _ = reference_run("test2")
    traj = builtin_scenario("test2", dx=0.05, dt=1e-4, n_snapshots=7).run()
    for state, t in zip(traj.states, traj.times):
        for a, g in traj.grids.items():
            state.fields[a] = np.asarray(oracle.evaluate(a, g.cell_centers, float(t)), dtype=float)
    assert l2_error(traj, oracle) == 0.0


def test_l2_error_formula_by_hand():
    sc = builtin_scenario("test1", dx=0.1, dt=2e-4, n_snapshots=3)
    traj = sc.run()
    rng = np.random.default_rng(1)
    other = sc.run()
    for s in other.states:
        for a in s.fields:
            s.fields[a] = s.fields[a] + rng.normal(0, 0.01, s.fields[a].shape)
    total = 0.0
    for s1, s2 in zip(traj.states, other.states):
        for a, g in traj.grids.items():
            total += g.dx * np.sum((s1.fields[a] - s2.fields[a]) ** 2)
    assert l2_error(traj, other) == pytest.approx(math.sqrt(total / 3), rel=1e-12)
    assert l2_error(traj, other, "mean_square") == pytest.approx(total / 3, rel=1e-12)


def test_l2_error_rejects_mismatched_grids():
    a = builtin_scenario("test1", dx=0.1, dt=2e-4, n_snapshots=3).run()
    b = builtin_scenario("test1", dx=0.05, dt=1e-4, n_snapshots=3).run()
    with pytest.raises(ValueError):
        l2_error(a, b)


def test_study_shapes_and_monotonicity():
    sc, oracle, _ = reference_run("test2")
    assert convergence_study(sc, []) == []
    one = convergence_study(sc, [(0.1, 2e-4)], oracle=oracle)
    assert len(one) == 1
    two = convergence_study(sc, [(0.1, 2e-4), (0.05, 1e-4)], oracle=oracle)
    assert two[1].l2_error / two[0].l2_error < 1
    assert is_monotone(two)


def test_study_rejects_infeasible_rows():
    sc = builtin_scenario("test2")
    with pytest.raises(CFLViolation):
        convergence_study(sc, [(0.1, 2e-4), (0.005, 1e-4)])


def test_free_flow_convergence_order():
    sc, oracle, _ = reference_run("test1")
    reports = convergence_study(sc, [(0.01, 2e-5), (0.005, 1e-5)], oracle=oracle)
    assert observed_order(reports) >= 0.7


@pytest.mark.parametrize("name", SCENARIOS)
def test_mass_audit(name):
    _, _, traj = reference_run(name)
    assert mass_defect(traj) < 1e-8


def test_report_csv():
    text = reports_to_csv([ErrorReport(0.1, 2e-4, 0.01, 0.0842, 1.5)])
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "0.1,0.0002,0.01,0.0842,1.5"
    assert reports_to_csv([]) == ",".join(CSV_COLUMNS) + "\n"
    with pytest.raises(ValueError):
        ErrorReport(0.1, 1e-4, 0.01, -1.0, 0.0)


def test_threaded_rows_keep_order(monkeypatch):
    sc, oracle, _ = reference_run("test2")
    pairs = [(0.1, 2e-4), (0.05, 1e-4), (0.1, 1e-4)]
    serial = convergence_study(sc, pairs, oracle=oracle)
    monkeypatch.setenv("BELTFLOW_THREADS", "3")
    threaded = convergence_study(sc, pairs, oracle=oracle)
    assert [(r.dx, r.dt, r.l2_error) for r in serial] == [(r.dx, r.dt, r.l2_error) for r in threaded]
