import csv
import json
import re

import numpy as np
import pytest

from beltflow.cli import main
from beltflow.config import ConfigError, parse_config, parse_study, shipped
from beltflow.experiments import builtin_scenario
from beltflow.solver import CFLViolation

COARSE = ["--dx", "0.05", "--dt", "1e-4"]

CUSTOM = """
arcs:
  - {id: a, domain: [-1.0, 0.0], velocity: 1.0}
  - {id: b, domain: [0.0, 1.0], velocity: 1.0}
junctions:
  - {id: J, kind: one_to_one, in: [a], out: [b]}
  - {id: s, kind: source, out: [a]}
  - {id: t, kind: sink, in: [b]}
initial:
  - arc: a
    sampled: [[-1.0, 0.0], [-0.5, %s], [0.0, 0.0]]
numerics: {dx: 0.005, dt: %s, delta: 0.01, horizon: 0.5}
"""


def _error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    m = re.fullmatch(r"error kind=(\w+) message=(.*)", err[0])
    assert m
    return m.group(1), json.loads(m.group(2))


def test_shipped_config_equals_builtin():
    sc = parse_config(shipped("test2.yaml"))
    ref = builtin_scenario("test2")
    assert sc.network == ref.network
    assert sc.profiles == ref.profiles
    assert (sc.horizon, sc.dx, sc.dt, sc.delta, sc.n_snapshots) == \
           (ref.horizon, ref.dx, ref.dt, ref.delta, ref.n_snapshots)


def test_cfl_error_cites_limit():
    with pytest.raises(CFLViolation) as info:
        parse_config(CUSTOM % (0.5, "1.0e-3"))
    assert "2.5e-05" in str(info.value)


def test_profile_above_capacity_is_rejected():
    with pytest.raises(ConfigError, match="above capacity"):
        parse_config(CUSTOM % (1.2, "1.0e-5"))


def test_parse_error_has_position():
    with pytest.raises(ConfigError) as info:
        parse_config("arcs:\n  - {id: a, domain: [0, 1]\n  velocity: 2\n")
    assert info.value.line is not None and info.value.column is not None


def test_validation_failure_is_forwarded():
    text = CUSTOM.replace("out: [b]}\n  - {id: s", "out: [zz]}\n  - {id: s") % (0.5, "1.0e-5")
    with pytest.raises(ConfigError, match="unresolved arc id"):
        parse_config(text)


def test_custom_config_with_sampled_profile():
    sc = parse_config(CUSTOM % (0.5, "1.0e-5"))
    assert sc.profiles["a"](-0.5) == 0.5 and sc.profiles["b"](0.5) == 0.0


def test_study_specs():
    left = parse_study(shipped("refinement.yaml"))
    assert left.kind == "convergence" and len(left.pairs) == 5
    right = parse_study(shipped("smoothing.yaml"))
    assert right.kind == "smoothing" and len(right.deltas) == 5 and right.dt == 2e-6


def test_simulate_writes_deterministic_csv_and_raster(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--scenario", "test2", *COARSE, "--snapshots", "40", "--raster"]
    assert main([*args, "--out", str(out1)]) == 0
    assert main([*args, "--out", str(out2)]) == 0
    assert (out1 / "fields.csv").read_bytes() == (out2 / "fields.csv").read_bytes()
    rows = list(csv.reader((out1 / "fields.csv").open()))
    assert rows[0] == ["arc_id", "x", "t", "rho"]
    assert all(repr(float(r[3])) == r[3] for r in rows[1:200])

    raw = (out1 / "raster_1.pgm").read_bytes()
    header, body = raw.split(b"\n", 3)[:3], raw.split(b"\n", 3)[3]
    assert header[0] == b"P5"
    cols, nrows = map(int, header[1].split())
    img = np.frombuffer(body, dtype=np.uint8).reshape(nrows, cols)
    assert nrows == 40 and cols == 63
    # congested wedge next to the junction is dark, vacuum is white
    assert img[20, -3:].max() < 5
    assert img[20, :5].min() > 240
    assert (out1 / "raster_2.pgm").exists()


def test_zero_horizon_gives_initial_data(tmp_path):
    assert main(["simulate", "--scenario", "test1", *COARSE, "--horizon", "0", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "fields.csv").open()))
    assert {r["t"] for r in rows} == {"0.0"}
    sc = builtin_scenario("test1")
    for r in rows[:50]:
        assert float(r["rho"]) == sc.profiles[r["arc_id"]](float(r["x"]))


def test_cfl_violation_exit_status(tmp_path, capsys):
    status = main(["simulate", "--scenario", "test2", "--dt", "1e-3", "--out", str(tmp_path)])
    assert status != 0
    kind, message = _error_line(capsys)
    assert kind == "cfl" and "1.25e-05" in message


def test_config_error_exit_status(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("arcs: [\n")
    assert main(["validate", "--config", str(bad)]) != 0
    kind, message = _error_line(capsys)
    assert kind == "config" and "line" in message


def test_compare_and_no_oracle(tmp_path, capsys):
    assert main(["compare", "--scenario", "test1", "--dx", "0.02", "--dt", "5e-5", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    rms = float(re.search(r"l2_error=(\S+)", out).group(1))
    mean_square = float(re.search(r"mean_square=(\S+)", out).group(1))
    assert mean_square < 0.0184
    assert rms == pytest.approx(float((tmp_path / "error.txt").read_text()))
    assert (tmp_path / "compare.csv").exists()

    chain = tmp_path / "chain.yaml"
    chain.write_text("""
arcs:
  - {id: a, domain: [-1, 0], velocity: 1}
  - {id: b, domain: [0, 1], velocity: 1}
  - {id: c, domain: [1, 2], velocity: 1}
junctions:
  - {id: s, kind: source, out: [a]}
  - {id: J1, kind: one_to_one, in: [a], out: [b]}
  - {id: J2, kind: one_to_one, in: [b], out: [c]}
  - {id: t, kind: sink, in: [c]}
numerics: {dx: 0.05, dt: 1.0e-4, delta: 0.01, horizon: 0.1}
""")
    assert main(["compare", "--config", str(chain), "--out", str(tmp_path)]) != 0
    kind, message = _error_line(capsys)
    assert kind == "no_oracle"


def test_analytic_self_compare_is_zero(tmp_path):
    assert main(["analytic", "--scenario", "test2", *COARSE, "--snapshots", "5", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "analytic.csv").open()))
    assert len(rows) == 5 * (63 + 63)
    from beltflow.experiments import l2_error
    sc = builtin_scenario("test2", dx=0.05, dt=1e-4, n_snapshots=5)
    oracle = sc.oracle()
    traj = sc.run()
    by_time = {}
    for r in rows:
        by_time.setdefault(float(r["t"]), {}).setdefault(r["arc_id"], []).append(float(r["rho"]))
    for state, t in zip(traj.states, traj.times):
        for a in state.fields:
            state.fields[a] = np.array(by_time[float(t)][a])
    assert l2_error(traj, oracle) == 0.0


def test_convergence_command(tmp_path, capsys):
    spec = tmp_path / "study.yaml"
    spec.write_text("study: convergence\nbase: test2\nrows: [[0.1, 2.0e-4], [0.05, 1.0e-4]]\n")
    assert main(["convergence", "--config", str(spec), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "study.csv").read_text().splitlines()
    assert lines[0] == "dx,dt,delta,l2_error,runtime_s" and len(lines) == 3
    spec.write_text("study: convergence\nbase: test2\nrows: []\n")
    assert main(["convergence", "--config", str(spec), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "study.csv").read_text() == "dx,dt,delta,l2_error,runtime_s\n"


def test_validate_command(capsys):
    assert main(["validate", "--scenario", "test5_merge"]) == 0
    assert "cfl_limit=" in capsys.readouterr().out


def test_usage_errors(capsys):
    assert main(["simulate"]) != 0
    kind, _ = _error_line(capsys)
    assert kind == "usage"
