"""YAML run configurations and study specifications."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .experiments import SCENARIOS, Scenario, builtin_scenario
from .network import Network, NetworkError, network_from_dict, validate
from .profiles import Constant, Gaussian, InitialProfile, Sampled, Zero, sampled


class ConfigError(ValueError):
    """Invalid configuration; ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


def _load(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        msg = f"parse error: {exc.problem or exc.context}"
        if mark is None:
            raise ConfigError(msg) from exc
        raise ConfigError(msg, mark.line + 1, mark.column + 1) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error: {exc}") from exc


def _profile(entry: Mapping) -> InitialProfile:
    if "gaussian" in entry:
        g = entry["gaussian"] or {}
        if "rate" in g:
            width = 1.0 / math.sqrt(float(g["rate"]))
        else:
            width = float(g.get("width", 1.0 / math.sqrt(3.0)))
        return Gaussian(float(g.get("center", -3.0 * math.pi / 5.0)), width,
                        float(g.get("amplitude", 1.0)))
    if "sampled" in entry:
        return sampled(entry["sampled"])
    if "constant" in entry:
        level = float(entry["constant"])
        return Zero() if level == 0 else Constant(level)
    raise ConfigError(f"initial entry for arc {entry.get('arc')!r} needs gaussian, sampled or constant")


def _check_bounds(network: Network, profiles: Mapping[str, InitialProfile]):
    for arc_id, prof in profiles.items():
        arc = network.arcs[arc_id]
        top = prof.max_value(arc.lo, arc.hi)
        if top > arc.capacity + 1e-12:
            raise ConfigError(f"initial density on arc {arc_id} reaches {top!r} above capacity {arc.capacity!r}")
        if isinstance(prof, Sampled) and min(prof.rhos) < 0:
            raise ConfigError(f"initial density on arc {arc_id} is negative")


def scenario_from_dict(data: Mapping) -> Scenario:
    if not isinstance(data, Mapping):
        raise ConfigError("configuration must be a mapping")
    numerics = dict(data.get("numerics") or {})
    unknown = set(numerics) - {"dx", "dt", "delta", "horizon", "snapshots", "output_times"}
    if unknown:
        raise ConfigError(f"unknown numerics keys: {', '.join(sorted(unknown))}")

    if "arcs" in data:
        try:
            network = network_from_dict(data)
        except NetworkError as exc:
            raise ConfigError(str(exc)) from exc
        report = validate(network)
        if not report.ok:
            first = report.violations[0]
            raise ConfigError(f"invalid network: {first.locus}: {first.message}")
        profiles: dict[str, InitialProfile] = {}
        for entry in data.get("initial") or []:
            arc_id = str(entry.get("arc"))
            if arc_id not in network.arcs:
                raise ConfigError(f"initial profile for unknown arc {arc_id!r}")
            profiles[arc_id] = _profile(entry)
        for arc_id in network.arcs:
            profiles.setdefault(arc_id, Zero())
        _check_bounds(network, profiles)
        if "horizon" not in numerics:
            raise ConfigError("numerics.horizon is required")
        sc = Scenario(str(data.get("name", "custom")), network, profiles, float(numerics["horizon"]))
    elif "scenario" in data:
        name = str(data["scenario"])
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}")
        sc = builtin_scenario(name)
    else:
        raise ConfigError("configuration needs either arcs/junctions or a scenario name")

    over = {k: float(numerics[k]) for k in ("dx", "dt", "delta", "horizon") if k in numerics}
    if "snapshots" in numerics:
        over["n_snapshots"] = int(numerics["snapshots"])
    if "output_times" in numerics:
        over["output_times"] = [float(t) for t in numerics["output_times"]]
    try:
        sc = sc.with_numerics(**over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sc.check_cfl()
    return sc


def parse_config(text: str) -> Scenario:
    """Build a :class:`Scenario` from YAML text.

    Parse errors carry the line and column. Network validation failures,
    out-of-range initial densities and CFL violations are reported as
    errors; nothing is silently adjusted.
    """
    return scenario_from_dict(_load(text))


def load_config(path: str | Path) -> Scenario:
    return parse_config(Path(path).read_text())


@dataclass
class StudySpec:
    kind: str  # "convergence" or "smoothing"
    base: Scenario
    pairs: list[tuple[float, float]]
    deltas: list[float]
    dx: float | None = None
    dt: float | None = None
    metric: str = "mean_square"


def parse_study(text: str) -> StudySpec:
    data = _load(text)
    if not isinstance(data, Mapping) or data.get("study") not in ("convergence", "smoothing"):
        raise ConfigError("study spec needs study: convergence | smoothing")
    base_src = data.get("base", "test2")
    base = scenario_from_dict(base_src if isinstance(base_src, Mapping) else {"scenario": base_src})
    if "horizon" in data:
        base = base.with_numerics(horizon=float(data["horizon"]))
    metric = str(data.get("metric", "mean_square"))
    if data["study"] == "convergence":
        pairs = [(float(r[0]), float(r[1])) for r in data.get("rows") or []]
        return StudySpec("convergence", base, pairs, [], metric=metric)
    deltas = [float(d) for d in data.get("deltas") or []]
    return StudySpec("smoothing", base, [], deltas, float(data["dx"]), float(data["dt"]), metric)


def shipped(name: str) -> str:
    """Text of a configuration file bundled with the package."""
    return resources.files("beltflow").joinpath("data", name).read_text()
