"""Feasible output regions, safe setpoints and controller simulation for current-limited inverters."""
from .model import DqVector, InverterParams, OutputQuantity, PAIRS, pair_outputs
from .optimizer import NotConverged, SolveReport, TrackingObjective, brute_force, solve, solve_frank_wolfe, solve_sdp
from .region import boundary, contains, midpoint_witness, support
from .simulator import NonFinite, Scenario, SimConfig, run_scenario, default_scenarios

__version__ = "0.1.0"

__all__ = [
    "DqVector",
    "InverterParams",
    "NonFinite",
    "NotConverged",
    "OutputQuantity",
    "PAIRS",
    "Scenario",
    "SimConfig",
    "SolveReport",
    "TrackingObjective",
    "boundary",
    "brute_force",
    "contains",
    "default_scenarios",
    "midpoint_witness",
    "pair_outputs",
    "run_scenario",
    "solve",
    "solve_frank_wolfe",
    "solve_sdp",
    "support",
]
