"""Semi-analytic solutions for a single junction.

Away from junctions every arc transports its density at constant speed.
At an interior junction the incoming arcs can deliver more than the
outgoing arcs accept; the surplus queues at capacity density in a region
``[g(t), 0]`` upstream of the junction. The interface ``g`` follows from a
mass balance: the queue holds the surplus that arrived since congestion
started plus the free-flow mass that would occupy ``[g, 0]``.

Queues are tracked event by event: a free arc starts queueing when its
arrival flux exceeds what the junction grants it, a queued arc leaves the
congested state when its surplus mass is used up. Event times are located
by scanning with step ``SCAN_STEP`` and bisecting to ``ROOT_TOL``; an
episode shorter than the scan step can be missed.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _rules
from .network import BeltArc, JunctionKind, JunctionSpec, Network, validate
from .profiles import ArcProfile, InitialProfile, Zero

SCAN_STEP = 1e-4
ROOT_TOL = 1e-10

# Gauss-Legendre nodes for integrating time-dependent outflows over a scan step
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class NoAnalyticOracle(ValueError):
    """The network is outside the single-junction cases with a closed solution."""


class CongestionOverflow(RuntimeError):
    """A queue grew past the upstream end of its arc."""


# ---- allocation rules -------------------------------------------------------

def merge_allocation(f1max: float, f2max: float, f3max: float, q: float):
    """Fluxes ``(f1, f2)`` granted to the incoming arcs of a merge and the
    effective priority ``q`` they realize."""
    if min(f1max, f2max, f3max) < 0:
        raise ValueError("flux limits must be nonnegative")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0,1]")
    f1, f2 = _rules.merge_split(float(f1max), float(f2max), float(f3max), float(q))
    total = f1 + f2
    q_eff = f1 / total if total > 0 else q
    return f1, f2, q_eff


def beta_active(t: float, mu: float, profile, arc_in: BeltArc, arc_2: BeltArc,
                arc_3: BeltArc, position: float = 0.0):
    """Shares of the junction throughput sent to the two outgoing arcs of an
    active diverge when the trace ``rho0(-a1 t)`` reaches the junction.

    Free flow keeps ``(mu, 1-mu)``. Once one branch would overflow, it is
    held at capacity and the other takes the rest; when both are full the
    shares are the capacity ratio ``f_i^max / (f2^max + f3^max)``.
    """
    arrival = arc_in.velocity * float(profile(position - arc_in.velocity * t))
    if arrival <= 0.0:
        return mu, 1.0 - mu
    h2, h3 = _rules.active_split(arrival, mu, arc_2.max_flux, arc_3.max_flux)
    total = h2 + h3
    return h2 / total, h3 / total


def congested_velocity(arc_in: BeltArc, exit_flux: float) -> float:
    """Transport speed inside a queue at capacity that drains at ``exit_flux``."""
    abar = exit_flux / arc_in.capacity
    if not abar < arc_in.velocity:
        raise ValueError("exit flux does not restrict the incoming arc; no congestion possible")
    return abar


def exit_capacity(network: Network, junction: JunctionSpec) -> dict[str, float]:
    """Flux that each incoming arc can push through ``junction`` while queued
    (all outgoing arcs free, all incoming arcs saturated)."""
    arcs = network.arcs
    kind = junction.kind
    if kind is JunctionKind.ONE_TO_ONE:
        return {junction.in_arcs[0]: arcs[junction.out_arcs[0]].max_flux}
    if kind in (JunctionKind.DIVERGE_PASSIVE, JunctionKind.DIVERGE_ACTIVE):
        f1 = arcs[junction.in_arcs[0]].max_flux
        f2, f3 = (arcs[a].max_flux for a in junction.out_arcs)
        if kind is JunctionKind.DIVERGE_PASSIVE:
            h2, h3 = _rules.passive_split(math.inf, junction.mu, f2, f3)
        else:
            h2, h3 = f2, f3
        return {junction.in_arcs[0]: min(h2 + h3, f1) if math.isfinite(h2 + h3) else f1}
    if kind is JunctionKind.MERGE:
        a1, a2 = junction.in_arcs
        f1, f2, _ = merge_allocation(arcs[a1].max_flux, arcs[a2].max_flux,
                                     arcs[junction.out_arcs[0]].max_flux, junction.q)
        return {a1: f1, a2: f2}
    raise NoAnalyticOracle(f"junction {junction.id} has no exit capacity")


def passive_plateau(network: Network, junction: JunctionSpec) -> tuple[float, float]:
    """Densities held on the two outgoing arcs of a passive diverge while
    the incoming arc is congested."""
    arcs = network.arcs
    a2, a3 = (arcs[a] for a in junction.out_arcs)
    h2, h3 = _rules.passive_split(math.inf, junction.mu, a2.max_flux, a3.max_flux)
    return h2 / a2.velocity, h3 / a3.velocity


# ---- Riemann problem at a one-to-one junction -------------------------------

@dataclass(frozen=True)
class Wave:
    speed: float
    left: float
    right: float
    kind: str


def riemann_one_to_one(rho_l: float, rho_r: float, arc_in: BeltArc, arc_out: BeltArc) -> list[Wave]:
    """Waves issuing from the junction for constant states on both sides.

    Free case: a stationary density jump scaled by ``a1/a2`` and a transport
    front at speed ``a2``. Congested case: a backward shock into the queue,
    a stationary capacity jump and a front at ``a2``. The backward speed is
    ``-inf`` when the incoming state is already at capacity.
    """
    if not (0.0 <= rho_l <= arc_in.capacity and 0.0 <= rho_r <= arc_out.capacity):
        raise ValueError("states must lie within the arc capacities")
    f_in = arc_in.velocity * rho_l
    f2max = arc_out.max_flux
    if f_in <= f2max:
        mid = f_in / arc_out.velocity
        return [Wave(0.0, rho_l, mid, "contact"),
                Wave(arc_out.velocity, mid, rho_r, "contact")]
    if rho_l >= arc_in.capacity:
        s_l = -math.inf
    else:
        s_l = (f2max - f_in) / (arc_in.capacity - rho_l)
    return [Wave(s_l, rho_l, arc_in.capacity, "shock"),
            Wave(0.0, arc_in.capacity, arc_out.capacity, "shock"),
            Wave(arc_out.velocity, arc_out.capacity, rho_r, "shock")]


def riemann_evaluate(waves: Sequence[Wave], y, t: float):
    """Density of a wave fan at junction-relative position ``y`` (left limit
    at wave locations)."""
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, waves[0].left)
    for w in waves:
        out = np.where(y > w.speed * t, w.right, out)
    return float(out) if out.ndim == 0 else out


# ---- root finding -------------------------------------------------------------

def _bisect(fn: Callable[[float], float], lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    """Smallest-bracket root of ``fn`` with ``fn(lo) <= 0 < fn(hi)``; returns the
    right end of the final bracket."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            hi = mid
        else:
            lo = mid
    return hi


def first_crossing(excess: Callable[[float], float], t_start: float, t_end: float,
                   step: float = SCAN_STEP, tol: float = ROOT_TOL) -> float | None:
    """First ``t`` in ``[t_start, t_end]`` with ``excess(t) > 0``, or ``None``."""
    if excess(t_start) > 0:
        return t_start
    t = t_start
    while t < t_end:
        tn = min(t + step, t_end)
        if excess(tn) > 0:
            return _bisect(excess, t, tn, tol)
        t = tn
    return None


# ---- congestion windows and interfaces ---------------------------------------

@dataclass
class CongestionWindow:
    t_start: float
    t_end: float
    junction_id: str
    arc_id: str
    closed: bool = True  # False when the queue still exists at the horizon

    def contains(self, t: float) -> bool:
        return self.t_start <= t <= self.t_end


@dataclass
class InterfaceG:
    """Upstream boundary ``g(t) <= 0`` (junction-relative) of one queue."""

    window: CongestionWindow
    arc: BeltArc
    profile: ArcProfile
    position: float
    queue_mass: Callable[[float], float]
    samples: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def balance(self, y: float, t: float) -> float:
        """Mass-balance residual in length units; decreasing in ``y``, zero at ``g(t)``."""
        a, rmax, p = self.arc.velocity, self.arc.capacity, self.position
        held = self.profile.integral(p + y - a * t, p - a * t)
        return -y - (held + self.queue_mass(t)) / rmax

    def __call__(self, t: float) -> float:
        return self._g(float(t))

    @lru_cache(maxsize=4096)
    def _g(self, t: float) -> float:
        w = self.window
        # a queue still present at the horizon keeps its interface there
        if not (w.t_start < t < w.t_end or (not w.closed and t == w.t_end > w.t_start)):
            return 0.0
        if self.balance(0.0, t) >= 0:
            return 0.0
        lo = -self.arc.length
        if self.balance(lo, t) < 0:
            raise CongestionOverflow(
                f"queue on arc {self.arc.id} reaches the upstream end at t={t:.6g}")
        # balance(lo) >= 0 > balance(0); bisect on -balance
        return _bisect(lambda y: -self.balance(y, t), lo, 0.0)

    def sample(self, n: int = 200) -> np.ndarray:
        ts = np.linspace(self.window.t_start, self.window.t_end, n)
        self.samples = np.column_stack([ts, [self(t) for t in ts]])
        return self.samples

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


def solve_interface_g(profile, arc: BeltArc, exit_flux: float, t_start: float, horizon: float,
                      position: float | None = None, junction_id: str = "J") -> InterfaceG:
    """Queue interface for an incoming arc drained at constant ``exit_flux``
    from ``t_start`` on.

    The queue mass is ``int_{t_start}^t a rho0(p - a s) ds - exit_flux (t - t_start)``;
    the window closes at the first time it returns to zero.
    """
    p = arc.hi if position is None else position
    prof = profile if isinstance(profile, ArcProfile) else ArcProfile(profile, arc.lo, arc.hi)
    a = arc.velocity

    def queue_mass(t):
        return prof.integral(p - a * t, p - a * t_start) - exit_flux * (t - t_start)

    # the mass is zero at t_start; look for its return to zero
    end = first_crossing(lambda t: -queue_mass(t), t_start + SCAN_STEP, horizon)
    if end is None and queue_mass(t_start + SCAN_STEP) <= 0:
        end = t_start
    window = CongestionWindow(t_start, horizon if end is None else end, junction_id, arc.id,
                              closed=end is not None)
    iface = InterfaceG(window, arc, prof, p, queue_mass)
    iface.sample()
    return iface


# ---- event-driven queue tracking ---------------------------------------------

class _Tracker:
    """Queue state of the incoming arcs of one junction over ``[0, horizon]``."""

    def __init__(self, network: Network, junction: JunctionSpec, profiles: Mapping[str, ArcProfile],
                 horizon: float):
        self.network = network
        self.junction = junction
        self.horizon = horizon
        self.ins = list(junction.in_arcs)
        self.outs = list(junction.out_arcs)
        arcs = network.arcs
        self.position = arcs[self.ins[0]].hi
        self.vel = {a: arcs[a].velocity for a in self.ins}
        self.fmax = {a: arcs[a].max_flux for a in self.ins}
        self.prof = {a: profiles[a] for a in self.ins}
        self.out_fmax = [arcs[a].max_flux for a in self.outs]

        # breakpoints: times, queued set on [t_k, t_{k+1}), cumulative outflow at t_k
        self.bp_t: list[float] = []
        self.bp_q: list[frozenset] = []
        self.bp_o: list[dict[str, float]] = []
        self.windows: dict[str, list[CongestionWindow]] = {a: [] for a in self.ins}
        self._run()

    # --- flux bookkeeping ---

    def arrival(self, a: str, t: float) -> float:
        return self.vel[a] * float(self.prof[a](self.position - self.vel[a] * t))

    def arrived(self, a: str, t: float) -> float:
        return self.prof[a].integral(self.position - self.vel[a] * t, self.position)

    def allocate(self, demands: list[float]) -> list[float]:
        kind = self.junction.kind
        if kind is JunctionKind.MERGE:
            f3 = self.out_fmax[0]
            if demands[0] + demands[1] <= f3:
                return list(demands)
            return list(_rules.merge_split(demands[0], demands[1], f3, self.junction.q))
        d = demands[0]
        if kind is JunctionKind.ONE_TO_ONE:
            return [min(d, self.out_fmax[0])]
        f2, f3 = self.out_fmax
        if kind is JunctionKind.DIVERGE_PASSIVE:
            h2, h3 = _rules.passive_split(d, self.junction.mu, f2, f3)
        else:
            h2, h3 = _rules.active_split(d, self.junction.mu, f2, f3)
        return [h2 + h3]

    def outflows(self, t: float, queued: frozenset) -> list[float]:
        demands = [self.fmax[a] if a in queued else self.arrival(a, t) for a in self.ins]
        return self.allocate(demands)

    def _integrate_out(self, a: str, t0: float, t1: float, queued: frozenset) -> float:
        if t1 <= t0:
            return 0.0
        k = self.ins.index(a)
        if len(self.ins) == 1 or queued == frozenset(self.ins):
            return self.outflows(t0, queued)[k] * (t1 - t0)
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        vals = [self.outflows(mid + half * x, queued)[k] for x in _GL_X]
        return half * float(np.dot(_GL_W, vals))

    def _mass(self, a: str, t: float, t0: float, o0: float, queued: frozenset) -> float:
        return self.arrived(a, t) - o0 - self._integrate_out(a, t0, t, queued)

    # --- event loop ---

    def _run(self):
        t, T = 0.0, self.horizon
        queued: frozenset = frozenset()
        out = {a: 0.0 for a in self.ins}
        starts: dict[str, float] = {}
        self._push(t, queued, out)
        eps = 1e-12
        guard = 0
        while t < T:
            guard += 1
            if guard > 10 * int(T / SCAN_STEP + 10):
                raise RuntimeError("queue tracking did not terminate")
            tn = min(t + SCAN_STEP, T)
            events = []
            for a in self.ins:
                k = self.ins.index(a)
                if a in queued:
                    def mass(s, a=a, t0=t, o0=out[a], q=queued):
                        return self._mass(a, s, t0, o0, q)
                    if mass(tn) < -eps:
                        te = _bisect(lambda s, m=mass: -m(s), t, tn)
                        events.append((te, "end", a))
                else:
                    def excess(s, a=a, k=k, q=queued):
                        return self.arrival(a, s) - self.outflows(s, q)[k]
                    if excess(t) > eps:
                        events.append((t, "start", a))
                    elif excess(tn) > eps:
                        te = _bisect(lambda s, e=excess: e(s) - eps, t, tn)
                        events.append((te, "start", a))
            if not events:
                self._advance(t, tn, queued, out)
                t = tn
                self._push(t, queued, out)
                continue
            te, what, a = min(events)
            self._advance(t, te, queued, out)
            if what == "start":
                queued = queued | {a}
                starts[a] = te
            else:
                queued = queued - {a}
                out[a] = self.arrived(a, te)
                self.windows[a].append(CongestionWindow(starts.pop(a), te, self.junction.id, a))
            t = te
            self._push(t, queued, out)
        for a, ts in starts.items():
            self.windows[a].append(CongestionWindow(ts, T, self.junction.id, a, closed=False))

    def _advance(self, t0, t1, queued, out):
        for a in self.ins:
            if a in queued:
                out[a] += self._integrate_out(a, t0, t1, queued)
            else:
                out[a] = self.arrived(a, t1)

    def _push(self, t, queued, out):
        if self.bp_t and self.bp_t[-1] == t:
            self.bp_q[-1], self.bp_o[-1] = queued, dict(out)
            return
        self.bp_t.append(t)
        self.bp_q.append(queued)
        self.bp_o.append(dict(out))

    # --- queries ---

    def _segment(self, t: float) -> int:
        return max(0, bisect.bisect_right(self.bp_t, t) - 1)

    def queued_at(self, t: float) -> frozenset:
        return self.bp_q[self._segment(t)]

    def queue_mass(self, a: str, t: float) -> float:
        k = self._segment(t)
        q = self.bp_q[k]
        if a not in q:
            return 0.0
        return max(0.0, self._mass(a, t, self.bp_t[k], self.bp_o[k][a], q))

    def total_outflow(self, t: float) -> float:
        return float(sum(self.outflows(t, self.queued_at(t))))


@dataclass
class AnalyticSolution:
    network: Network
    profiles: dict[str, ArcProfile]
    horizon: float
    junction: JunctionSpec | None
    windows: list[CongestionWindow]
    interfaces: list[InterfaceG]
    _tracker: _Tracker | None = None

    def interfaces_for(self, arc_id: str) -> list[InterfaceG]:
        return [g for g in self.interfaces if g.arc.id == arc_id]

    def g(self, arc_id: str, t: float) -> float:
        for iface in self.interfaces_for(arc_id):
            if iface.window.contains(t):
                return iface(t)
        return 0.0

    def junction_outflow(self, t: float) -> list[float]:
        """Fluxes leaving the incoming arcs at time ``t``."""
        tr = self._tracker
        return tr.outflows(t, tr.queued_at(t))

    def outgoing_fluxes(self, t: float) -> list[float]:
        """Fluxes entering the outgoing arcs at time ``t``."""
        j, tr = self.junction, self._tracker
        total = float(sum(self.junction_outflow(t)))
        if j.kind in (JunctionKind.ONE_TO_ONE, JunctionKind.MERGE):
            return [total]
        f2, f3 = tr.out_fmax
        split = _rules.passive_split if j.kind is JunctionKind.DIVERGE_PASSIVE else _rules.active_split
        return list(split(total, j.mu, f2, f3))

    def evaluate(self, arc_id: str, x, t: float):
        """Density on ``arc_id`` at positions ``x`` and time ``t``."""
        arc = self.network.arcs[arc_id]
        prof = self.profiles[arc_id]
        x = np.asarray(x, dtype=float)
        free = np.asarray(prof(x - arc.velocity * t), dtype=float)
        j = self.junction
        if j is None or t <= 0:
            out = free
        elif arc_id in j.in_arcs:
            g = self.g(arc_id, t)
            y = x - arc.hi
            out = np.where((y > g) & (g < 0), arc.capacity, free) if g < 0 else free
        elif arc_id in j.out_arcs:
            k = j.out_arcs.index(arc_id)
            y = x - arc.lo
            tau = t - y / arc.velocity
            fed = np.array([self.outgoing_fluxes(s)[k] / arc.velocity if s >= 0 else 0.0
                            for s in np.atleast_1d(tau)]).reshape(tau.shape)
            out = np.where(tau >= 0, fed, free)
        else:
            out = free
        return float(out) if out.ndim == 0 else out

    def congestion_windows(self, arc_id: str | None = None) -> list[CongestionWindow]:
        return [w for w in self.windows if arc_id is None or w.arc_id == arc_id]


def _single_junction(network: Network) -> JunctionSpec | None:
    report = validate(network)
    if not report.ok:
        raise ValueError(f"invalid network: {report}")
    inner = network.interior_junctions()
    if len(inner) > 1:
        raise NoAnalyticOracle("no analytic oracle for networks with more than one interior junction")
    for j in network.junctions:
        if j.kind is JunctionKind.SOURCE and j.has_inflow:
            raise NoAnalyticOracle("no analytic oracle with nonzero source inflow")
    return inner[0] if inner else None


def solve(network: Network, profiles: Mapping[str, InitialProfile], horizon: float) -> AnalyticSolution:
    """Build the semi-analytic solution on ``[0, horizon]``."""
    junction = _single_junction(network)
    arc_profiles = {a: ArcProfile(profiles.get(a) or Zero(), arc.lo, arc.hi)
                    for a, arc in network.arcs.items()}
    for a, arc in network.arcs.items():
        top = arc_profiles[a].profile.max_value(arc.lo, arc.hi)
        if top > arc.capacity * (1 + 1e-12):
            raise ValueError(f"initial density on arc {a} exceeds capacity ({top:.6g})")
    if junction is None:
        return AnalyticSolution(network, arc_profiles, horizon, None, [], [])
    tracker = _Tracker(network, junction, arc_profiles, horizon)
    windows, interfaces = [], []
    for a in junction.in_arcs:
        for w in tracker.windows[a]:
            windows.append(w)
            iface = InterfaceG(w, network.arcs[a], arc_profiles[a], tracker.position,
                               lambda t, a=a: tracker.queue_mass(a, t))
            iface.sample()
            interfaces.append(iface)
    windows.sort(key=lambda w: w.t_start)
    return AnalyticSolution(network, arc_profiles, horizon, junction, windows, interfaces, tracker)


def first_congestion_time(network: Network, profiles: Mapping[str, InitialProfile], horizon: float,
                          t_start: float = 0.0) -> float | None:
    """First time the junction cannot pass everything that arrives.

    Thresholds: one-to-one ``a1 rho0 > f2max``; passive diverge
    ``a1 rho0 > min(f2max/mu, f3max/(1-mu))``; active diverge
    ``a1 rho0 > f2max + f3max``; merge ``a1 rho0_1 + a2 rho0_2 > f3max``.
    """
    junction = _single_junction(network)
    if junction is None:
        return None
    arcs = network.arcs
    p = arcs[junction.in_arcs[0]].hi
    profs = {a: ArcProfile(profiles.get(a) or Zero(), arcs[a].lo, arcs[a].hi) for a in junction.in_arcs}

    def arrivals(t):
        return sum(arcs[a].velocity * float(profs[a](p - arcs[a].velocity * t)) for a in junction.in_arcs)

    if junction.kind is JunctionKind.MERGE:
        cap = arcs[junction.out_arcs[0]].max_flux
    else:
        cap = exit_capacity(network, junction)[junction.in_arcs[0]]
    return first_crossing(lambda t: arrivals(t) - cap, t_start, horizon)
