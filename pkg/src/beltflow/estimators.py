"""Estimator-style wrappers around the solver and the analytic oracle.

Both follow the scikit-learn conventions: hyperparameters are constructor
arguments exposed by ``get_params``; ``fit`` takes a :class:`Scenario` and
stores fitted state in attributes with a trailing underscore; ``predict``
maps density queries ``(arc_id, x, t)`` to values.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .experiments import Scenario, builtin_scenario, l2_error


def check_scenario(scenario) -> Scenario:
    """Accept a :class:`Scenario` or the name of a built-in one."""
    if isinstance(scenario, str):
        return builtin_scenario(scenario)
    if not isinstance(scenario, Scenario):
        raise TypeError(f"expected a Scenario or scenario name, got {type(scenario).__name__}")
    return scenario


def check_queries(queries: Iterable[Sequence], scenario: Scenario):
    """Split ``(arc_id, x, t)`` rows into arrays and check they lie in the domain.

    Returns
    -------
    arc_ids : ndarray of str
    x, t : ndarray of float
    """
    rows = list(queries)
    if not rows:
        return np.array([], dtype=str), np.array([]), np.array([])
    if any(len(r) != 3 for r in rows):
        raise ValueError("queries must be (arc_id, x, t) triples")
    arc_ids = np.array([str(r[0]) for r in rows])
    x = np.array([r[1] for r in rows], dtype=float)
    t = np.array([r[2] for r in rows], dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise ValueError("query coordinates must be finite")
    unknown = set(arc_ids) - set(scenario.network.arcs)
    if unknown:
        raise ValueError(f"unknown arc ids: {sorted(unknown)}")
    if np.any(t < 0) or np.any(t > scenario.horizon):
        raise ValueError(f"query times must lie in [0, {scenario.horizon}]")
    for a in set(arc_ids):
        arc = scenario.network.arcs[a]
        xs = x[arc_ids == a]
        if np.any(xs < arc.lo) or np.any(xs > arc.hi):
            raise ValueError(f"query positions outside arc {a}")
    return arc_ids, x, t


class BeltSimulator(BaseEstimator):
    """Finite-volume solver as an estimator.

    Parameters
    ----------
    dx, dt, delta : float or None
        Override the scenario's discretization and smoothing when given.
    n_snapshots : int
        Number of uniformly spaced stored snapshots.
    """

    def __init__(self, dx=None, dt=None, delta=None, n_snapshots=100):
        self.dx = dx
        self.dt = dt
        self.delta = delta
        self.n_snapshots = n_snapshots

    def fit(self, scenario, y=None):
        sc = check_scenario(scenario).with_numerics(dx=self.dx, dt=self.dt, delta=self.delta,
                                                    n_snapshots=self.n_snapshots)
        self.scenario_ = sc
        self.trajectory_ = sc.run()
        return self

    def predict(self, queries):
        """Density at each query: nearest stored snapshot, linear in space."""
        check_is_fitted(self, "trajectory_")
        arc_ids, x, t = check_queries(queries, self.scenario_)
        traj = self.trajectory_
        k = np.abs(traj.times[None, :] - t[:, None]).argmin(axis=1)
        out = np.empty(len(x))
        for i, (a, xi, ki) in enumerate(zip(arc_ids, x, k)):
            g = traj.grids[a]
            out[i] = np.interp(xi, g.cell_centers, traj.states[ki].fields[a])
        return out

    def score(self, scenario=None, y=None):
        """Negative time-averaged L2 distance to the analytic solution."""
        check_is_fitted(self, "trajectory_")
        oracle = self.scenario_.oracle()
        return -l2_error(self.trajectory_, oracle, "rms")


class AnalyticOracle(BaseEstimator):
    """Semi-analytic single-junction solution as an estimator."""

    def __init__(self, horizon=None):
        self.horizon = horizon

    def fit(self, scenario, y=None):
        sc = check_scenario(scenario).with_numerics(horizon=self.horizon)
        self.scenario_ = sc
        self.solution_ = sc.oracle()
        self.windows_ = list(self.solution_.windows)
        return self

    def predict(self, queries):
        check_is_fitted(self, "solution_")
        arc_ids, x, t = check_queries(queries, self.scenario_)
        return np.array([float(self.solution_.evaluate(a, xi, ti)) for a, xi, ti in zip(arc_ids, x, t)])
