"""Conveyor belt networks with a discontinuous flux: finite-volume solver
and semi-analytic single-junction solutions."""

from .analytic import AnalyticSolution, CongestionOverflow, NoAnalyticOracle, solve
from .estimators import AnalyticOracle, BeltSimulator
from .experiments import Scenario, builtin_scenario, convergence_study, l2_error, smoothing_study
from .flux import FluxParams, godunov_flux, regularized_flux
from .network import BeltArc, JunctionKind, JunctionSpec, Network, standard_topology, validate
from .solver import CFLViolation, NumericFault, Trajectory, simulate

__all__ = [
    "AnalyticOracle", "AnalyticSolution", "BeltArc", "BeltSimulator", "CFLViolation",
    "CongestionOverflow", "FluxParams", "JunctionKind", "JunctionSpec", "Network",
    "NoAnalyticOracle", "NumericFault", "Scenario", "Trajectory", "builtin_scenario",
    "convergence_study", "godunov_flux", "l2_error", "regularized_flux", "simulate",
    "smoothing_study", "solve", "standard_topology", "validate",
]

__version__ = "0.1.0"
