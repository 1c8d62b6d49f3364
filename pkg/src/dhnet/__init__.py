"""District heating dispatch planning with two-stage stochastic MILPs."""

from .config import load_config, load_series, load_spec
from .evaluate import eev, solve_plan, summarize, vss
from .model import ModelOptions, build_model, solve
from .network import SystemSpec, build_network, validate_system
from .rolling import RollConfig, roll_horizon
from .scenario import ScenarioSet, weighted_history_scenarios
from .solver import MilpProblem, SolveParams, solve_milp

__version__ = "0.1.0"

__all__ = [
    "load_config",
    "load_series",
    "load_spec",
    "eev",
    "solve_plan",
    "summarize",
    "vss",
    "ModelOptions",
    "build_model",
    "solve",
    "SystemSpec",
    "build_network",
    "validate_system",
    "RollConfig",
    "roll_horizon",
    "ScenarioSet",
    "weighted_history_scenarios",
    "MilpProblem",
    "SolveParams",
    "solve_milp",
]
