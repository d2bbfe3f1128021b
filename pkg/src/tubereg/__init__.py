"""Robust tube MPC for offset-free output regulation with embedded
disturbance models."""

from . import errors
from .mpc import Mpc, MpcConfig, MpcStep, optimal_reachable_reference
from .polytope import Polytope
from .qp import QpProblem, QpSolution, QpSolver
from .signal_model import Filter, make_filter
from .sim import Scenario, Trace, four_tank_scenario, run, verify_theorem1
from .synthesis import ControllerDesign, TerminalCost, realize_controller, \
    synthesize_gain, terminal_cost
from .tube import ReferenceSet, TubeSets, build_reference_set, \
    build_tube_sets, compute_rpi, project_tubes
from .velocity_model import ExtendedModel, Plant, build_extended, pack_state

__all__ = [
    "errors", "Polytope", "Filter", "make_filter",
    "Plant", "ExtendedModel", "build_extended", "pack_state",
    "ControllerDesign", "TerminalCost", "synthesize_gain",
    "realize_controller", "terminal_cost",
    "TubeSets", "ReferenceSet", "compute_rpi", "project_tubes",
    "build_tube_sets", "build_reference_set",
    "QpProblem", "QpSolution", "QpSolver",
    "Mpc", "MpcConfig", "MpcStep", "optimal_reachable_reference",
    "Scenario", "Trace", "run", "four_tank_scenario", "verify_theorem1",
]
__version__ = "0.1.0"
