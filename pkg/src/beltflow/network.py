"""Belt network description: arcs, junctions and structural validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence, Union

import numpy as np

InflowLike = Union[None, float, Callable[[float], float], Sequence[Sequence[float]]]


class JunctionKind(str, Enum):
    SOURCE = "source"
    SINK = "sink"
    ONE_TO_ONE = "one_to_one"
    DIVERGE_PASSIVE = "diverge_passive"
    DIVERGE_ACTIVE = "diverge_active"
    MERGE = "merge"


# (number of incoming arcs, number of outgoing arcs)
ARITY = {
    JunctionKind.SOURCE: (0, 1),
    JunctionKind.SINK: (1, 0),
    JunctionKind.ONE_TO_ONE: (1, 1),
    JunctionKind.DIVERGE_PASSIVE: (1, 2),
    JunctionKind.DIVERGE_ACTIVE: (1, 2),
    JunctionKind.MERGE: (2, 1),
}

DIVERGE_KINDS = (JunctionKind.DIVERGE_PASSIVE, JunctionKind.DIVERGE_ACTIVE)


class NetworkError(ValueError):
    """Raised when a network cannot be constructed."""


@dataclass(frozen=True)
class BeltArc:
    """A single conveyor segment occupying the interval ``(lo, hi)``."""

    id: str
    lo: float
    hi: float
    velocity: float
    capacity: float = 1.0

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def max_flux(self) -> float:
        return self.velocity * self.capacity


@dataclass(frozen=True)
class JunctionSpec:
    """A vertex of the belt graph.

    ``mu`` is the distribution parameter of the diverge kinds (share sent to
    the first outgoing arc), ``q`` the merge priority of the first incoming
    arc. Sources may carry an inflow: a constant, a callable of time, or a
    table of ``(t, value)`` pairs interpolated linearly.
    """

    id: str
    kind: JunctionKind
    in_arcs: tuple[str, ...] = ()
    out_arcs: tuple[str, ...] = ()
    mu: float | None = None
    q: float | None = None
    inflow: InflowLike = None

    def __post_init__(self):
        object.__setattr__(self, "kind", JunctionKind(self.kind))
        object.__setattr__(self, "in_arcs", tuple(self.in_arcs))
        object.__setattr__(self, "out_arcs", tuple(self.out_arcs))

    def inflow_at(self, t):
        """Source inflow at time(s) ``t``; zero when no inflow is attached."""
        t = np.asarray(t, dtype=float)
        if self.inflow is None:
            return np.zeros_like(t)
        if callable(self.inflow):
            return np.vectorize(self.inflow, otypes=[float])(t)
        if np.ndim(self.inflow) == 0:
            return np.full_like(t, float(self.inflow))
        table = np.asarray(self.inflow, dtype=float)
        return np.interp(t, table[:, 0], table[:, 1])

    @property
    def has_inflow(self) -> bool:
        if self.inflow is None:
            return False
        if callable(self.inflow):
            return True
        if np.ndim(self.inflow) == 0:
            return float(self.inflow) != 0.0
        return bool(np.any(np.asarray(self.inflow, dtype=float)[:, 1] != 0.0))


@dataclass(frozen=True)
class Issue:
    locus: str
    message: str

    def __str__(self):
        return f"{self.locus}: {self.message}"


@dataclass
class ValidationReport:
    """Structural problems found in a network.

    ``violations`` are errors; ``notes`` are informational and do not make
    the network invalid.
    """

    violations: list[Issue] = field(default_factory=list)
    notes: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(str(v) for v in self.violations)


@dataclass(frozen=True)
class Network:
    arcs: Mapping[str, BeltArc]
    junctions: tuple[JunctionSpec, ...]

    def __post_init__(self):
        if not isinstance(self.arcs, Mapping):
            object.__setattr__(self, "arcs", {a.id: a for a in self.arcs})
        object.__setattr__(self, "arcs", dict(self.arcs))
        object.__setattr__(self, "junctions", tuple(self.junctions))

    @property
    def arc_ids(self) -> list[str]:
        return list(self.arcs)

    def junction(self, junction_id: str) -> JunctionSpec:
        for j in self.junctions:
            if j.id == junction_id:
                return j
        raise KeyError(junction_id)

    def interior_junctions(self) -> list[JunctionSpec]:
        return [j for j in self.junctions
                if j.kind not in (JunctionKind.SOURCE, JunctionKind.SINK)]

    def upstream_junction(self, arc_id: str) -> JunctionSpec:
        return next(j for j in self.junctions if arc_id in j.out_arcs)

    def downstream_junction(self, arc_id: str) -> JunctionSpec:
        return next(j for j in self.junctions if arc_id in j.in_arcs)

    @property
    def max_in_degree(self) -> int:
        return max((len(j.in_arcs) for j in self.junctions), default=0)


def _check_unit(value, name, locus, report):
    if value is None:
        report.violations.append(Issue(locus, f"{name} missing"))
    elif not (0.0 <= value <= 1.0):
        report.violations.append(Issue(locus, f"{name} out of [0,1]"))


def validate(network: Network) -> ValidationReport:
    """Collect every structural violation of ``network``; never raises."""
    report = ValidationReport()
    for arc_id, arc in network.arcs.items():
        locus = f"arc {arc_id}"
        if arc.id != arc_id:
            report.violations.append(Issue(locus, f"key does not match arc id {arc.id!r}"))
        if not (arc.velocity > 0):
            report.violations.append(Issue(locus, "velocity must be positive"))
        if not (arc.capacity > 0):
            report.violations.append(Issue(locus, "capacity must be positive"))
        if not (arc.lo < arc.hi):
            report.violations.append(Issue(locus, "domain must satisfy lo < hi"))

    upstream: dict[str, int] = {a: 0 for a in network.arcs}
    downstream: dict[str, int] = {a: 0 for a in network.arcs}
    seen_ids = set()
    for j in network.junctions:
        locus = f"junction {j.id}"
        if j.id in seen_ids:
            report.violations.append(Issue(locus, "duplicate junction id"))
        seen_ids.add(j.id)
        n_in, n_out = ARITY[j.kind]
        if len(j.in_arcs) != n_in or len(j.out_arcs) != n_out:
            report.violations.append(Issue(
                locus, f"{j.kind.value} needs {n_in} incoming and {n_out} outgoing arcs, "
                       f"got {len(j.in_arcs)} and {len(j.out_arcs)}"))
        if j.kind in DIVERGE_KINDS:
            _check_unit(j.mu, "mu", locus, report)
            if j.kind is JunctionKind.DIVERGE_PASSIVE and j.mu in (0.0, 1.0):
                report.notes.append(Issue(locus, "mu in {0,1} reduces to a one-to-one junction"))
        elif j.mu is not None:
            report.violations.append(Issue(locus, "mu given for a non-diverge junction"))
        if j.kind is JunctionKind.MERGE:
            _check_unit(j.q, "q", locus, report)
        elif j.q is not None:
            report.violations.append(Issue(locus, "q given for a non-merge junction"))
        if j.inflow is not None and j.kind is not JunctionKind.SOURCE:
            report.violations.append(Issue(locus, "inflow attached to a non-source junction"))

        positions = []
        for arc_id in j.in_arcs:
            if arc_id not in network.arcs:
                report.violations.append(Issue(locus, f"unresolved arc id {arc_id!r}"))
                continue
            downstream[arc_id] += 1
            positions.append(network.arcs[arc_id].hi)
        for arc_id in j.out_arcs:
            if arc_id not in network.arcs:
                report.violations.append(Issue(locus, f"unresolved arc id {arc_id!r}"))
                continue
            upstream[arc_id] += 1
            positions.append(network.arcs[arc_id].lo)
        if positions and not all(math.isclose(p, positions[0], rel_tol=1e-12, abs_tol=1e-12)
                                 for p in positions):
            report.violations.append(Issue(locus, "attached arc endpoints do not coincide"))

    for arc_id in network.arcs:
        if upstream[arc_id] != 1:
            report.violations.append(Issue(
                f"arc {arc_id}", f"attached to {upstream[arc_id]} upstream junctions, expected 1"))
        if downstream[arc_id] != 1:
            report.violations.append(Issue(
                f"arc {arc_id}", f"attached to {downstream[arc_id]} downstream junctions, expected 1"))
    if network.max_in_degree > 2:
        report.violations.append(Issue("network", "junction with more than two incoming arcs"))
    return report


def _chain(arcs, inner: JunctionSpec) -> Network:
    junctions = [inner]
    for arc in arcs:
        if arc.id in inner.in_arcs:
            junctions.append(JunctionSpec(f"src_{arc.id}", JunctionKind.SOURCE, out_arcs=(arc.id,)))
        else:
            junctions.append(JunctionSpec(f"sink_{arc.id}", JunctionKind.SINK, in_arcs=(arc.id,)))
    return Network({a.id: a for a in arcs}, tuple(junctions))


def standard_topology(kind: str, velocities: Sequence[float],
                      capacities: Sequence[float] | None = None,
                      mu: float | None = None, q: float | None = None,
                      active: bool = False, length: float = math.pi) -> Network:
    """Single-junction layouts with every arc of length ``length``.

    The junction sits at ``x = 0``; incoming arcs span ``(-length, 0)`` and
    outgoing arcs ``(0, length)``. Arc ids are ``"1"``, ``"2"`` (and ``"3"``)
    numbered as incoming first for ``one_to_one``/``one_to_two`` and as
    incoming ``1, 2`` with outgoing ``3`` for ``two_to_one``.
    """
    n_arcs = {"one_to_one": 2, "one_to_two": 3, "two_to_one": 3}
    if kind not in n_arcs:
        raise NetworkError(f"unknown topology {kind!r}")
    n = n_arcs[kind]
    velocities = list(velocities)
    capacities = [1.0] * n if capacities is None else list(capacities)
    if len(velocities) != n or len(capacities) != n:
        raise NetworkError(f"{kind} needs {n} velocities and capacities")

    if kind == "two_to_one":
        n_in = 2
    else:
        n_in = 1
    arcs = []
    for i, (a, c) in enumerate(zip(velocities, capacities)):
        lo, hi = ((-length, 0.0) if i < n_in else (0.0, length))
        arcs.append(BeltArc(str(i + 1), lo, hi, float(a), float(c)))
    ids = [a.id for a in arcs]

    if kind == "one_to_one":
        if mu is not None or q is not None:
            raise NetworkError("one_to_one takes no mu or q")
        inner = JunctionSpec("J", JunctionKind.ONE_TO_ONE, (ids[0],), (ids[1],))
    elif kind == "one_to_two":
        if mu is None or q is not None:
            raise NetworkError("one_to_two needs mu and no q")
        jk = JunctionKind.DIVERGE_ACTIVE if active else JunctionKind.DIVERGE_PASSIVE
        inner = JunctionSpec("J", jk, (ids[0],), (ids[1], ids[2]), mu=float(mu))
    else:
        if q is None or mu is not None:
            raise NetworkError("two_to_one needs q and no mu")
        inner = JunctionSpec("J", JunctionKind.MERGE, (ids[0], ids[1]), (ids[2],), q=float(q))
    return _chain(arcs, inner)


# --- plain-data form used by the config reader/writer ---------------------

def network_to_dict(network: Network) -> dict:
    arcs = [{"id": a.id, "domain": [a.lo, a.hi], "velocity": a.velocity,
             "capacity": a.capacity} for a in network.arcs.values()]
    junctions = []
    for j in network.junctions:
        d = {"id": j.id, "kind": j.kind.value, "in": list(j.in_arcs), "out": list(j.out_arcs)}
        if j.mu is not None:
            d["mu"] = j.mu
        if j.q is not None:
            d["q"] = j.q
        if j.inflow is not None:
            if callable(j.inflow):
                raise NetworkError(f"junction {j.id}: callable inflow cannot be serialized")
            if np.ndim(j.inflow) == 0:
                d["inflow"] = float(j.inflow)
            else:
                d["inflow"] = [[float(t), float(v)] for t, v in j.inflow]
        junctions.append(d)
    return {"arcs": arcs, "junctions": junctions}


def network_from_dict(data: Mapping) -> Network:
    try:
        arcs = [BeltArc(str(a["id"]), float(a["domain"][0]), float(a["domain"][1]),
                        float(a["velocity"]), float(a.get("capacity", 1.0)))
                for a in data["arcs"]]
        junctions = []
        for j in data["junctions"]:
            inflow = j.get("inflow")
            if isinstance(inflow, list):
                inflow = tuple(tuple(float(v) for v in row) for row in inflow)
            junctions.append(JunctionSpec(
                str(j["id"]), JunctionKind(j["kind"]),
                tuple(str(a) for a in j.get("in", ())),
                tuple(str(a) for a in j.get("out", ())),
                mu=None if j.get("mu") is None else float(j["mu"]),
                q=None if j.get("q") is None else float(j["q"]),
                inflow=inflow))
    except (KeyError, TypeError, IndexError) as exc:
        raise NetworkError(f"malformed network description: {exc!r}") from exc
    except ValueError as exc:
        raise NetworkError(str(exc)) from exc
    return Network({a.id: a for a in arcs}, tuple(junctions))
