"""Heterogeneity-aware cache valves for striped SSD arrays.

The steady-state model and planner (:mod:`hacache.model`,
:mod:`hacache.planner`), the runtime controller (:mod:`hacache.controller`),
the request-level simulator (:mod:`hacache.sim`) and the benchmark CLI
(:mod:`hacache.bench`).
"""

from .controller import (
    ControllerParams,
    ControllerState,
    Phase,
    controller_loop,
    estimate_valve,
    nhc_optimize,
    phase1_sweep,
    phase2_sweep,
    regulate_capacity,
    run_two_phase,
)
from .env import AnalyticEnv, MeasurementEnv, Telemetry
from .errors import ConfigurationError, DomainError, EnvironmentFailure, HACacheError, SearchSpaceTooLarge
from .model import (
    ArrayTopology,
    DeviceProfile,
    HitProfile,
    SteadyState,
    ValveConfig,
    aggregate_bound,
    effective_diversion,
    steady_state_solve,
)
from .planner import DiversionPlan, brute_force_plan, plan_optimal

__version__ = "0.1.0"

__all__ = [
    "AnalyticEnv",
    "ArrayTopology",
    "ConfigurationError",
    "ControllerParams",
    "ControllerState",
    "DeviceProfile",
    "DiversionPlan",
    "DomainError",
    "EnvironmentFailure",
    "HACacheError",
    "HitProfile",
    "MeasurementEnv",
    "Phase",
    "SearchSpaceTooLarge",
    "SteadyState",
    "Telemetry",
    "ValveConfig",
    "aggregate_bound",
    "brute_force_plan",
    "controller_loop",
    "effective_diversion",
    "estimate_valve",
    "nhc_optimize",
    "phase1_sweep",
    "phase2_sweep",
    "plan_optimal",
    "regulate_capacity",
    "run_two_phase",
    "steady_state_solve",
]
