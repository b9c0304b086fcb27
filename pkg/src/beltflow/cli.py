"""Command-line interface: ``beltflow {simulate,analytic,compare,convergence,validate}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analytic, experiments
from .config import ConfigError, load_config, parse_study, shipped
from .experiments import Scenario, builtin_scenario, format_float, l2_error, reports_to_csv
from .network import NetworkError, validate
from .solver import CFLViolation, NumericFault, SimulationError, Trajectory, make_grids

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, status: int):
        super().__init__(message)
        self.kind = kind
        self.status = status


def _fail(exc: Exception) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, CFLViolation):
        return CliError("cfl", str(exc), EXIT_INPUT)
    if isinstance(exc, analytic.NoAnalyticOracle):
        return CliError("no_oracle", str(exc), EXIT_INPUT)
    if isinstance(exc, analytic.CongestionOverflow):
        return CliError("congestion_overflow", str(exc), EXIT_NUMERIC)
    if isinstance(exc, (ConfigError, NetworkError)):
        return CliError("config", str(exc), EXIT_INPUT)
    if isinstance(exc, NumericFault):
        return CliError("numeric", str(exc), EXIT_NUMERIC)
    if isinstance(exc, SimulationError):
        return CliError("simulation", str(exc), EXIT_NUMERIC)
    if isinstance(exc, OSError):
        return CliError("io", str(exc), EXIT_IO)
    if isinstance(exc, (KeyError, ValueError)):
        return CliError("input", str(exc).strip("'\""), EXIT_INPUT)
    raise exc


# ---- scenario resolution ------------------------------------------------

def resolve_scenario(args) -> Scenario:
    if args.config and args.scenario:
        raise CliError("usage", "give either --config or --scenario, not both", EXIT_USAGE)
    if args.config:
        sc = load_config(args.config)
    elif args.scenario:
        sc = builtin_scenario(args.scenario)
    else:
        raise CliError("usage", "one of --config or --scenario is required", EXIT_USAGE)
    sc = sc.with_numerics(dx=args.dx, dt=args.dt, delta=args.delta, horizon=args.horizon,
                          n_snapshots=args.snapshots)
    if args.horizon is not None and sc.output_times is not None:
        sc = sc.with_numerics(output_times=sc.output_times[sc.output_times <= sc.horizon])
    sc.check_cfl()
    return sc


# ---- writers ---------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_fields(path: Path, traj: Trajectory):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("arc_id", "x", "t", "rho"))
        for t, state in zip(traj.times, traj.states):
            ts = format_float(t)
            for arc_id, g in traj.grids.items():
                for x, r in zip(g.cell_centers, state.fields[arc_id]):
                    w.writerow((arc_id, format_float(x), ts, format_float(r)))


def write_pgm(path: Path, values: np.ndarray, top: float):
    """Binary graymap, rows = time, columns = cells; 0 is white, ``top`` black."""
    shade = np.clip(values / top, 0.0, 1.0)
    pixels = np.round(255.0 * (1.0 - shade)).astype(np.uint8)
    rows, cols = pixels.shape
    with path.open("wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def write_rasters(out: Path, traj: Trajectory) -> list[Path]:
    paths = []
    for arc_id in traj.grids:
        top = traj.network.arcs[arc_id].capacity + traj.delta
        field = np.array([s.fields[arc_id] for s in traj.states])
        p = out / f"raster_{arc_id}.pgm"
        write_pgm(p, field, top)
        paths.append(p)
    return paths


def _oracle_fields(sc: Scenario, sol, traj: Trajectory) -> list[dict[str, np.ndarray]]:
    return [{a: np.asarray(sol.evaluate(a, g.cell_centers, float(t)), dtype=float)
             for a, g in traj.grids.items()} for t in traj.times]


# ---- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = resolve_scenario(args)
    traj = sc.run()
    out = _out_dir(args)
    write_fields(out / "fields.csv", traj)
    if args.raster:
        write_rasters(out, traj)
    m = traj.masses()
    print(f"snapshots={len(traj.times)} final_mass={format_float(m[-1])} "
          f"outflow={format_float(traj.outflow[-1])} mass_defect={format_float(experiments.mass_defect(traj))}")
    return EXIT_OK


def cmd_analytic(args) -> int:
    sc = resolve_scenario(args)
    sol = sc.oracle()
    grids = make_grids(sc.network, sc.dx)
    out = _out_dir(args)
    times = sc.times()
    with (out / "analytic.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("arc_id", "x", "t", "rho"))
        for t in times:
            for a, g in grids.items():
                for x, r in zip(g.cell_centers, np.atleast_1d(sol.evaluate(a, g.cell_centers, float(t)))):
                    w.writerow((a, format_float(x), format_float(t), format_float(r)))
    for win in sol.windows:
        print(f"window arc={win.arc_id} t_start={format_float(win.t_start)} "
              f"t_end={format_float(win.t_end)} closed={str(win.closed).lower()}")
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = resolve_scenario(args)
    sol = sc.oracle()
    traj = sc.run()
    ref = _oracle_fields(sc, sol, traj)
    out = _out_dir(args)
    with (out / "compare.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("arc_id", "x", "t", "rho_num", "rho_ref", "diff"))
        for t, state, fields in zip(traj.times, traj.states, ref):
            for a, g in traj.grids.items():
                num, an = state.fields[a], fields[a]
                for x, r, e in zip(g.cell_centers, num, an):
                    w.writerow((a, format_float(x), format_float(t), format_float(r),
                                format_float(e), format_float(r - e)))
    rms = l2_error(traj, sol, "rms")
    print(f"l2_error={format_float(rms)} mean_square={format_float(rms * rms)}")
    (out / "error.txt").write_text(f"{format_float(rms)}\n")
    return EXIT_OK


def cmd_convergence(args) -> int:
    if args.config and args.study:
        raise CliError("usage", "give either --config or --study, not both", EXIT_USAGE)
    if args.study:
        text = shipped(f"{args.study}.yaml")
    elif args.config:
        text = Path(args.config).read_text()
    else:
        raise CliError("usage", "one of --config or --study is required", EXIT_USAGE)
    spec = parse_study(text)
    base = spec.base.with_numerics(horizon=args.horizon, n_snapshots=args.snapshots)
    if spec.kind == "convergence":
        reports = experiments.convergence_study(base, spec.pairs, metric=spec.metric)
    else:
        reports = experiments.smoothing_study(base, spec.deltas, spec.dx, spec.dt, metric=spec.metric)
    out = _out_dir(args)
    (out / "study.csv").write_text(reports_to_csv(reports))
    for r in reports:
        print(f"dx={format_float(r.dx)} dt={format_float(r.dt)} delta={format_float(r.delta)} "
              f"l2_error={format_float(r.l2_error)}")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = resolve_scenario(args)
    report = validate(sc.network)
    for note in report.notes:
        print(f"note: {note.locus}: {note.message}")
    print(f"ok dt={format_float(sc.dt)} cfl_limit={format_float(sc.cfl_limit())}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beltflow", description="Conveyor belt network simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": (cmd_simulate, "run the finite-volume solver and export fields"),
        "analytic": (cmd_analytic, "evaluate the semi-analytic solution on the solver grid"),
        "compare": (cmd_compare, "run both and report the L2 error"),
        "convergence": (cmd_convergence, "run a refinement or smoothing study"),
        "validate": (cmd_validate, "check a configuration without running it"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        p.add_argument("--config", help="YAML configuration (study spec for 'convergence')")
        if name == "convergence":
            p.add_argument("--study", choices=("refinement", "smoothing"), help="bundled study spec")
        else:
            p.add_argument("--scenario", choices=experiments.SCENARIOS, help="built-in scenario")
            p.add_argument("--dx", type=float)
            p.add_argument("--dt", type=float)
            p.add_argument("--delta", type=float)
            p.add_argument("--raster", action="store_true", help="write one PGM per arc (simulate)")
        p.add_argument("--horizon", type=float)
        p.add_argument("--snapshots", type=int)
        p.add_argument("--out", default="beltflow_out", help="output directory")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one diagnostic line
        err = _fail(exc)
        print(f"error kind={err.kind} message={json.dumps(str(err))}", file=sys.stderr)
        return err.status


if __name__ == "__main__":
    sys.exit(main())
