"""Explicit finite-volume time stepping on a belt network.

Interior interfaces use the Godunov flux of the regularized flux function.
Arc ends exchange flux through their junction: sources inject a prescribed
inflow, sinks let the demand leave, and interior junctions split or merge
the demand of incoming arcs against the supply of outgoing arcs.

All arcs live in one flat density array; the whole time loop is compiled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numba import njit

from . import _rules
from .flux import FluxParams, cfl_max_timestep, demand, godunov, peak_density, supply
from .network import DIVERGE_KINDS, JunctionKind, Network, JunctionSpec


class SimulationError(RuntimeError):
    pass


class CFLViolation(SimulationError):
    def __init__(self, dt: float, limit: float):
        super().__init__(f"time step {dt:.6g} violates the CFL bound; need dt <= {limit:.3g} "
                         f"(exact limit {limit!r})")
        self.dt = dt
        self.limit = limit


class NumericFault(SimulationError):
    def __init__(self, message: str, arc_id: str | None = None, cell: int | None = None):
        super().__init__(message)
        self.arc_id = arc_id
        self.cell = cell


@dataclass(frozen=True)
class ArcGrid:
    """Uniform cells of width ``dx`` covering an arc exactly."""

    arc_id: str
    n_cells: int
    dx: float
    lo: float

    @property
    def cell_centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.lo + np.arange(self.n_cells + 1) * self.dx


def make_grids(network: Network, dx: float) -> dict[str, ArcGrid]:
    """One grid per arc with the cell count closest to ``length / dx``.

    The effective step is ``length / n_cells``, so it differs from ``dx`` by
    less than half a cell spread over the arc.
    """
    if not dx > 0:
        raise ValueError("dx must be positive")
    grids = {}
    for arc_id, arc in network.arcs.items():
        n = max(1, int(round(arc.length / dx)))
        grids[arc_id] = ArcGrid(arc_id, n, arc.length / n, arc.lo)
    return grids


@dataclass
class NetworkState:
    time: float
    fields: dict[str, np.ndarray]

    def total_mass(self, grids: Mapping[str, ArcGrid]) -> float:
        return float(sum(grids[k].dx * np.sum(v) for k, v in self.fields.items()))

    def copy(self) -> "NetworkState":
        return NetworkState(self.time, {k: v.copy() for k, v in self.fields.items()})


@dataclass
class JunctionFluxes:
    h_out: dict[str, float]
    h_in: dict[str, float]
    congested: bool = False


# ---- compiled junction rules ---------------------------------------------

_SOURCE, _SINK, _ONE, _PASSIVE, _ACTIVE, _MERGE = range(6)
_KIND_CODE = {
    JunctionKind.SOURCE: _SOURCE,
    JunctionKind.SINK: _SINK,
    JunctionKind.ONE_TO_ONE: _ONE,
    JunctionKind.DIVERGE_PASSIVE: _PASSIVE,
    JunctionKind.DIVERGE_ACTIVE: _ACTIVE,
    JunctionKind.MERGE: _MERGE,
}


@njit(cache=True)
def _cap_demand(rho, k, A, R, P, C, delta):
    d = demand(rho, A[k], R[k], delta, P[k])
    return d if d < C[k] else C[k]


@njit(cache=True)
def _cap_supply(rho, k, A, R, P, C, delta):
    s = supply(rho, A[k], R[k], delta, P[k])
    return s if s < C[k] else C[k]


@njit(cache=True)
def _one_to_one(rho_l, rho_r, kin, kout, A, R, P, C, delta):
    d = _cap_demand(rho_l, kin, A, R, P, C, delta)
    s = _cap_supply(rho_r, kout, A, R, P, C, delta)
    return (d, False) if d <= s else (s, True)


@njit(cache=True)
def _diverge(rho_l, rho_2, rho_3, active, mu, kin, k2, k3, A, R, P, C, delta):
    d = _cap_demand(rho_l, kin, A, R, P, C, delta)
    s2 = _cap_supply(rho_2, k2, A, R, P, C, delta)
    s3 = _cap_supply(rho_3, k3, A, R, P, C, delta)
    if mu * d <= s2 and (1.0 - mu) * d <= s3:
        return mu * d, (1.0 - mu) * d, False
    if active:
        h2, h3 = _rules.active_split(d, mu, s2, s3)
        return h2, h3, d > s2 + s3
    h2, h3 = _rules.passive_split(d, mu, s2, s3)
    return h2, h3, True


@njit(cache=True)
def _merge(rho_1, rho_2, rho_3, q, k1, k2, k3, A, R, P, C, delta):
    d1 = _cap_demand(rho_1, k1, A, R, P, C, delta)
    d2 = _cap_demand(rho_2, k2, A, R, P, C, delta)
    s3 = _cap_supply(rho_3, k3, A, R, P, C, delta)
    if d1 + d2 <= s3:
        return d1, d2, False
    h1, h2 = _rules.merge_split(d1, d2, s3, q)
    return h1, h2, True


@njit(cache=True)
def _advance(rho, nsteps, dt, off, ncell, lam, A, R, P, C, delta,
             jkind, jin, jout, jpar, jsrc, inflow, hin, hout, congested, acc):
    narcs = off.shape[0]
    njun = jkind.shape[0]
    for n in range(nsteps):
        src_total = 0.0
        sink_total = 0.0
        for j in range(njun):
            kind = jkind[j]
            if kind == _SOURCE:
                k = jout[j, 0]
                g = 0.0
                if jsrc[j] >= 0:
                    g = inflow[n, jsrc[j]]
                s = _cap_supply(rho[off[k]], k, A, R, P, C, delta)
                v = g if g < s else s
                if v < 0.0:
                    v = 0.0
                hin[k] = v
                src_total += v
            elif kind == _SINK:
                k = jin[j, 0]
                v = _cap_demand(rho[off[k] + ncell[k] - 1], k, A, R, P, C, delta)
                hout[k] = v
                sink_total += v
            elif kind == _ONE:
                ki = jin[j, 0]
                ko = jout[j, 0]
                h, c = _one_to_one(rho[off[ki] + ncell[ki] - 1], rho[off[ko]], ki, ko,
                                   A, R, P, C, delta)
                hout[ki] = h
                hin[ko] = h
                congested[j] = c
            elif kind == _PASSIVE or kind == _ACTIVE:
                ki = jin[j, 0]
                k2 = jout[j, 0]
                k3 = jout[j, 1]
                h2, h3, c = _diverge(rho[off[ki] + ncell[ki] - 1], rho[off[k2]], rho[off[k3]],
                                     kind == _ACTIVE, jpar[j], ki, k2, k3, A, R, P, C, delta)
                hin[k2] = h2
                hin[k3] = h3
                hout[ki] = h2 + h3
                congested[j] = c
            else:
                k1 = jin[j, 0]
                k2 = jin[j, 1]
                ko = jout[j, 0]
                h1, h2, c = _merge(rho[off[k1] + ncell[k1] - 1], rho[off[k2] + ncell[k2] - 1],
                                   rho[off[ko]], jpar[j], k1, k2, ko, A, R, P, C, delta)
                hout[k1] = h1
                hout[k2] = h2
                hin[ko] = h1 + h2
                congested[j] = c
        for k in range(narcs):
            base = off[k]
            m = ncell[k]
            left = hin[k]
            for i in range(m - 1):
                right = godunov(rho[base + i], rho[base + i + 1], A[k], R[k], delta, P[k])
                rho[base + i] -= lam[k] * (right - left)
                left = right
            rho[base + m - 1] -= lam[k] * (hout[k] - left)
        acc[0] += dt * src_total
        acc[1] += dt * sink_total


class _Layout:
    """Flat arrays describing the network for the compiled loop."""

    def __init__(self, network: Network, grids: Mapping[str, ArcGrid], delta: float):
        self.network = network
        self.grids = dict(grids)
        self.delta = float(delta)
        self.arc_ids = list(network.arcs)
        index = {a: k for k, a in enumerate(self.arc_ids)}
        self.index = index
        ncell = np.array([grids[a].n_cells for a in self.arc_ids], dtype=np.int64)
        self.ncell = ncell
        self.off = np.concatenate([[0], np.cumsum(ncell)[:-1]]).astype(np.int64)
        self.dx = np.array([grids[a].dx for a in self.arc_ids])
        arcs = [network.arcs[a] for a in self.arc_ids]
        self.A = np.array([a.velocity for a in arcs])
        self.R = np.array([a.capacity for a in arcs])
        self.P = np.array([peak_density(a.capacity, delta) for a in arcs])
        self.C = self.A * self.R
        js = list(network.junctions)
        self.junctions = js
        self.jkind = np.array([_KIND_CODE[j.kind] for j in js], dtype=np.int64)
        self.jin = np.full((len(js), 2), -1, dtype=np.int64)
        self.jout = np.full((len(js), 2), -1, dtype=np.int64)
        self.jpar = np.zeros(len(js))
        self.jsrc = np.full(len(js), -1, dtype=np.int64)
        self.sources = []
        for n, j in enumerate(js):
            for s, a in enumerate(j.in_arcs):
                self.jin[n, s] = index[a]
            for s, a in enumerate(j.out_arcs):
                self.jout[n, s] = index[a]
            if j.kind in DIVERGE_KINDS:
                self.jpar[n] = j.mu
            elif j.kind is JunctionKind.MERGE:
                self.jpar[n] = j.q
            elif j.kind is JunctionKind.SOURCE and j.has_inflow:
                self.jsrc[n] = len(self.sources)
                self.sources.append(j)
        self.hin = np.zeros(len(arcs))
        self.hout = np.zeros(len(arcs))
        self.congested = np.zeros(len(js), dtype=np.bool_)
        self.acc = np.zeros(2)

    def flatten(self, state: NetworkState) -> np.ndarray:
        return np.concatenate([np.asarray(state.fields[a], dtype=float) for a in self.arc_ids])

    def unflatten(self, rho: np.ndarray, t: float) -> NetworkState:
        return NetworkState(t, {a: rho[o:o + n].copy()
                                for a, o, n in zip(self.arc_ids, self.off, self.ncell)})

    def inflow_table(self, t0: float, dt: float, nsteps: int) -> np.ndarray:
        if not self.sources:
            return np.zeros((1, 1))
        times = t0 + dt * np.arange(nsteps)
        return np.column_stack([j.inflow_at(times) for j in self.sources])

    def advance(self, rho: np.ndarray, t0: float, dt: float, nsteps: int):
        if nsteps <= 0:
            return
        table = self.inflow_table(t0, dt, nsteps)
        lam = dt / self.dx
        _advance(rho, nsteps, dt, self.off, self.ncell, lam, self.A, self.R, self.P, self.C,
                 self.delta, self.jkind, self.jin, self.jout, self.jpar, self.jsrc, table,
                 self.hin, self.hout, self.congested, self.acc)

    def check(self, rho: np.ndarray, tol: float = 1e-9):
        bad = ~np.isfinite(rho)
        if bad.any():
            arc, cell = self.locate(int(np.argmax(bad)))
            raise NumericFault(f"non-finite density on arc {arc}, cell {cell}", arc, cell)
        top = np.repeat(self.R + self.delta, self.ncell)
        over = (rho < -tol) | (rho > top + tol)
        if over.any():
            i = int(np.argmax(over))
            arc, cell = self.locate(i)
            raise NumericFault(f"max principle violated on arc {arc}, cell {cell}: "
                               f"density {rho[i]!r}", arc, cell)

    def locate(self, flat_index: int) -> tuple[str, int]:
        k = int(np.searchsorted(self.off, flat_index, side="right")) - 1
        return self.arc_ids[k], int(flat_index - self.off[k])


def check_timestep(network: Network, grids: Mapping[str, ArcGrid], delta: float, dt: float):
    limit = cfl_max_timestep(network, delta, {k: g.dx for k, g in grids.items()})
    if not (dt > 0) or dt > limit * (1.0 + 1e-9):
        raise CFLViolation(dt, limit)
    return limit


def initial_state(network: Network, grids: Mapping[str, ArcGrid], profiles: Mapping,
                  method: str = "point") -> NetworkState:
    """Cell values of the initial profiles.

    ``"point"`` samples at cell centers, ``"average"`` integrates over cells.
    Arcs without a profile start empty.
    """
    fields = {}
    for arc_id, grid in grids.items():
        prof = profiles.get(arc_id)
        if prof is None:
            fields[arc_id] = np.zeros(grid.n_cells)
        elif method == "point":
            fields[arc_id] = np.asarray(prof.value(grid.cell_centers), dtype=float) * np.ones(grid.n_cells)
        elif method == "average":
            e = grid.edges
            fields[arc_id] = np.array([prof.integral(e[i], e[i + 1]) for i in range(grid.n_cells)]) / grid.dx
        else:
            raise ValueError(f"unknown initialization {method!r}")
    return NetworkState(0.0, fields)


def step(state: NetworkState, network: Network, grids: Mapping[str, ArcGrid], dt: float,
         delta: float) -> NetworkState:
    """Advance ``state`` by one explicit step of size ``dt``."""
    check_timestep(network, grids, delta, dt)
    layout = _Layout(network, grids, delta)
    rho = layout.flatten(state)
    layout.check(rho)
    layout.advance(rho, state.time, dt, 1)
    layout.check(rho)
    return layout.unflatten(rho, state.time + dt)


# ---- Python-level junction rules -----------------------------------------

def _params(*ps: FluxParams):
    A = np.array([p.velocity for p in ps])
    R = np.array([p.capacity for p in ps])
    P = np.array([p.peak_density for p in ps])
    delta = ps[0].smoothing
    if any(p.smoothing != delta for p in ps):
        raise ValueError("all arcs at a junction must share the smoothing width")
    return A, R, P, A * R, delta


def junction_fluxes_one_to_one(rho_last_in: float, rho_first_out: float,
                               params_in: FluxParams, params_out: FluxParams,
                               in_arc: str = "in", out_arc: str = "out") -> JunctionFluxes:
    A, R, P, C, d = _params(params_in, params_out)
    h, congested = _one_to_one(float(rho_last_in), float(rho_first_out), 0, 1, A, R, P, C, d)
    return JunctionFluxes({in_arc: h}, {out_arc: h}, bool(congested))


def junction_fluxes_diverge(rho_last_in: float, rho_first_out2: float, rho_first_out3: float,
                            spec: JunctionSpec, params: tuple[FluxParams, FluxParams, FluxParams]
                            ) -> JunctionFluxes:
    if spec.kind not in DIVERGE_KINDS:
        raise ValueError(f"junction {spec.id} is not a diverge")
    if spec.mu is None or not 0.0 <= spec.mu <= 1.0:
        raise ValueError(f"junction {spec.id}: mu must lie in [0,1]")
    A, R, P, C, d = _params(*params)
    h2, h3, congested = _diverge(float(rho_last_in), float(rho_first_out2), float(rho_first_out3),
                                 spec.kind is JunctionKind.DIVERGE_ACTIVE, float(spec.mu),
                                 0, 1, 2, A, R, P, C, d)
    a_in, (a2, a3) = spec.in_arcs[0], spec.out_arcs
    return JunctionFluxes({a_in: h2 + h3}, {a2: h2, a3: h3}, bool(congested))


def junction_fluxes_merge(rho_last_in1: float, rho_last_in2: float, rho_first_out: float,
                          spec: JunctionSpec, params: tuple[FluxParams, FluxParams, FluxParams]
                          ) -> JunctionFluxes:
    if spec.kind is not JunctionKind.MERGE:
        raise ValueError(f"junction {spec.id} is not a merge")
    if spec.q is None or not 0.0 <= spec.q <= 1.0:
        raise ValueError(f"junction {spec.id}: q must lie in [0,1]")
    A, R, P, C, d = _params(*params)
    h1, h2, congested = _merge(float(rho_last_in1), float(rho_last_in2), float(rho_first_out),
                               float(spec.q), 0, 1, 2, A, R, P, C, d)
    (a1, a2), a3 = spec.in_arcs, spec.out_arcs[0]
    return JunctionFluxes({a1: h1, a2: h2}, {a3: h1 + h2}, bool(congested))


# ---- whole runs ------------------------------------------------------------

@dataclass
class Trajectory:
    """Stored snapshots of a run plus cumulative boundary exchange.

    ``inflow[k]`` and ``outflow[k]`` are the masses that entered through
    sources and left through sinks during ``[0, times[k]]``.
    """

    network: Network
    grids: dict[str, ArcGrid]
    delta: float
    dt: float
    times: np.ndarray
    states: list[NetworkState]
    inflow: np.ndarray
    outflow: np.ndarray
    congested: list[dict[str, bool]] = field(default_factory=list)

    def masses(self) -> np.ndarray:
        return np.array([s.total_mass(self.grids) for s in self.states])

    def field(self, arc_id: str, k: int = -1) -> np.ndarray:
        return self.states[k].fields[arc_id]

    def at(self, t: float) -> NetworkState:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.states[k]


def simulate(network: Network, profiles: Mapping, horizon: float, dx: float, dt: float,
             delta: float, output_times=None, init: str = "point",
             grids: Mapping[str, ArcGrid] | None = None) -> Trajectory:
    """March from ``t = 0`` to ``horizon`` and store the requested snapshots.

    Output times are moved to the nearest step time ``n * dt``; ``t = 0`` and
    the horizon are always stored. A horizon that is not a step multiple
    ends with one shortened step.
    """
    grids = dict(grids) if grids is not None else make_grids(network, dx)
    check_timestep(network, grids, delta, dt)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    layout = _Layout(network, grids, delta)
    state = initial_state(network, grids, profiles, init)
    rho = layout.flatten(state)
    layout.check(rho)

    n_full = int(math.floor(horizon / dt + 1e-9))
    tail = horizon - n_full * dt
    if tail < 1e-9 * max(dt, horizon):
        tail = 0.0
    requested = [] if output_times is None else list(output_times)
    marks = sorted({0, n_full} | {min(n_full, int(round(t / dt))) for t in requested
                                   if 0 <= t <= horizon + 1e-12})

    times, states, inflow, outflow, flags = [], [], [], [], []

    def record(t):
        layout.check(rho)
        times.append(t)
        states.append(layout.unflatten(rho, t))
        inflow.append(layout.acc[0])
        outflow.append(layout.acc[1])
        flags.append({j.id: bool(c) for j, c in zip(layout.junctions, layout.congested)})

    done = 0
    for m in marks:
        layout.advance(rho, done * dt, dt, m - done)
        done = m
        record(m * dt)
    if tail > 0:
        layout.advance(rho, n_full * dt, tail, 1)
        record(horizon)
    return Trajectory(network, grids, float(delta), float(dt), np.array(times), states,
                      np.array(inflow), np.array(outflow), flags)
