"""Built-in scenarios, the time-averaged L2 error and the refinement studies."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import analytic
from .flux import cfl_max_timestep
from .network import Network, standard_topology
from .profiles import InitialProfile, Zero, gaussian_bump
from .solver import CFLViolation, Trajectory, make_grids, simulate

SCENARIOS = ("test1", "test2", "test3_passive", "test4_active", "test5_merge")

# reference discretization of the built-in scenarios
DX, DT, DELTA = 5e-3, 1e-5, 1e-2

REFINEMENT_ROWS = ((0.1, 2e-4), (0.05, 1e-4), (0.02, 5e-5), (0.01, 2e-5), (0.005, 1e-5))
SMOOTHING_DELTAS = (5e-2, 2e-2, 1e-2, 5e-3, 2e-3)
SMOOTHING_DX, SMOOTHING_DT = 5e-3, 2e-6

CSV_COLUMNS = ("dx", "dt", "delta", "l2_error", "runtime_s")

# Studies tabulate the mean squared L2 distance by default, which decays at
# first order under refinement; "rms" gives its square root.
METRICS = ("mean_square", "rms")


@dataclass
class Scenario:
    name: str
    network: Network
    profiles: dict[str, InitialProfile]
    horizon: float
    dx: float = DX
    dt: float = DT
    delta: float = DELTA
    n_snapshots: int = 100
    output_times: np.ndarray | None = None

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.output_times is not None:
            ts = np.asarray(self.output_times, dtype=float)
            if ts.size and (ts.min() < 0 or ts.max() > self.horizon):
                raise ValueError("output times must lie in [0, horizon]")
            self.output_times = ts

    def times(self) -> np.ndarray:
        if self.output_times is not None:
            return self.output_times
        if self.horizon == 0:
            return np.array([0.0])
        return np.linspace(0.0, self.horizon, self.n_snapshots)

    def cfl_limit(self) -> float:
        grids = make_grids(self.network, self.dx)
        return cfl_max_timestep(self.network, self.delta, {a: g.dx for a, g in grids.items()})

    def check_cfl(self):
        limit = self.cfl_limit()
        if self.dt > limit * (1 + 1e-9):
            raise CFLViolation(self.dt, limit)

    def with_numerics(self, **kw) -> "Scenario":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def run(self) -> Trajectory:
        self.check_cfl()
        return simulate(self.network, self.profiles, self.horizon, self.dx, self.dt, self.delta,
                        output_times=self.times())

    def oracle(self) -> analytic.AnalyticSolution:
        return analytic.solve(self.network, self.profiles, self.horizon)


def builtin_scenario(name: str, **overrides) -> Scenario:
    """One of the five reference scenarios, all fed by the same Gaussian bump."""
    bump = gaussian_bump()
    if name == "test1":
        sc = Scenario(name, standard_topology("one_to_one", (1, 2)), {"1": bump, "2": Zero()}, 2.6)
    elif name == "test2":
        sc = Scenario(name, standard_topology("one_to_one", (2, 1)), {"1": bump, "2": Zero()}, 2.0)
    elif name in ("test3_passive", "test4_active"):
        net = standard_topology("one_to_two", (4, 1, 2), mu=0.5, active=name == "test4_active")
        # a1 = 4 halves the admissible step relative to the other scenarios
        sc = Scenario(name, net, {"1": bump, "2": Zero(), "3": Zero()}, 2.0, dt=5e-6)
    elif name == "test5_merge":
        sc = Scenario(name, standard_topology("two_to_one", (1, 1, 1), q=0.3),
                      {"1": bump, "2": bump, "3": Zero()}, 4.0)
    else:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return sc.with_numerics(**overrides)


@dataclass
class ErrorReport:
    dx: float
    dt: float
    delta: float
    l2_error: float
    runtime_seconds: float
    mass_defect: float = 0.0
    metric: str = "mean_square"

    def __post_init__(self):
        if not self.l2_error >= 0:
            raise ValueError("l2_error must be nonnegative")

    def row(self) -> tuple:
        return (self.dx, self.dt, self.delta, self.l2_error, self.runtime_seconds)


def l2_error(trajectory: Trajectory, oracle, metric: str = "rms") -> float:
    """Time-averaged discrete L2 distance over the stored snapshots.

    ``rms`` is ``sqrt(mean_n sum_j dx (num - ref)^2)``; ``mean_square`` drops
    the square root. ``oracle`` is an
    :class:`~beltflow.analytic.AnalyticSolution` or another trajectory on the
    same grids.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    states = trajectory.states
    if isinstance(oracle, Trajectory):
        if oracle.grids.keys() != trajectory.grids.keys() or any(
                oracle.grids[a].n_cells != g.n_cells for a, g in trajectory.grids.items()):
            raise ValueError("mismatched grids")
        if len(oracle.states) != len(states):
            raise ValueError("mismatched snapshot counts")
        ref = lambda k, a, xs: oracle.states[k].fields[a]  # noqa: E731
    else:
        ref = lambda k, a, xs: oracle.evaluate(a, xs, float(trajectory.times[k]))  # noqa: E731
    total = 0.0
    for k, state in enumerate(states):
        for a, g in trajectory.grids.items():
            err = state.fields[a] - ref(k, a, g.cell_centers)
            total += g.dx * float(np.dot(err, err))
    mean = total / len(states)
    return math.sqrt(mean) if metric == "rms" else mean


def mass_defect(trajectory: Trajectory) -> float:
    """Relative violation of ``M(T) + out(T) = M(0) + in(T)``."""
    m = trajectory.masses()
    lhs = m[-1] + trajectory.outflow[-1]
    rhs = m[0] + trajectory.inflow[-1]
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BELTFLOW_THREADS", "1")))
    except ValueError:
        return 1


def _run_rows(base: Scenario, rows: Sequence[dict], oracle, metric: str) -> list[ErrorReport]:
    # fail fast on infeasible rows before spending time on the others
    scenarios = [base.with_numerics(**r) for r in rows]
    for sc in scenarios:
        sc.check_cfl()

    def one(sc: Scenario) -> ErrorReport:
        t0 = time.perf_counter()
        traj = sc.run()
        runtime = time.perf_counter() - t0
        return ErrorReport(sc.dx, sc.dt, sc.delta, l2_error(traj, oracle, metric), runtime,
                           mass_defect(traj), metric)

    workers = min(_threads(), max(1, len(scenarios)))
    if workers == 1:
        return [one(sc) for sc in scenarios]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, scenarios))


def convergence_study(base: Scenario, pairs: Iterable[tuple[float, float]] = REFINEMENT_ROWS,
                      oracle=None, metric: str = "mean_square") -> list[ErrorReport]:
    """L2 errors for a sequence of ``(dx, dt)`` pairs at the scenario's smoothing."""
    pairs = list(pairs)
    if not pairs:
        return []
    oracle = oracle or base.oracle()
    return _run_rows(base, [{"dx": dx, "dt": dt} for dx, dt in pairs], oracle, metric)


def smoothing_study(base: Scenario, deltas: Iterable[float] = SMOOTHING_DELTAS,
                    dx: float = SMOOTHING_DX, dt: float = SMOOTHING_DT,
                    oracle=None, metric: str = "mean_square") -> list[ErrorReport]:
    """L2 errors for several smoothing widths on a fixed grid and time step."""
    deltas = list(deltas)
    if not deltas:
        return []
    oracle = oracle or base.oracle()
    return _run_rows(base, [{"dx": dx, "dt": dt, "delta": d} for d in deltas], oracle, metric)


def is_monotone(reports: Sequence[ErrorReport], slack: float = 0.0) -> bool:
    errs = [r.l2_error for r in reports]
    return all(b <= a * (1 + slack) for a, b in zip(errs, errs[1:]))


def observed_order(reports: Sequence[ErrorReport]) -> float:
    """Convergence order in ``dx`` between the last two rows (of the rms error)."""
    a, b = reports[-2], reports[-1]
    ea, eb = a.l2_error, b.l2_error
    if a.metric == "mean_square":
        ea, eb = math.sqrt(ea), math.sqrt(eb)
    return math.log(ea / eb) / math.log(a.dx / b.dx)


def format_float(x: float) -> str:
    return repr(float(x))


def reports_to_csv(reports: Sequence[ErrorReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([format_float(v) for v in r.row()])
    return buf.getvalue()
