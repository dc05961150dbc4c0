"""Space-indexed MILP scheduling for multi-product pipeline networks."""

__version__ = "0.1.0"

from .batches import BatchCatalog, enumerate_batches
from .instance import Instance, InstanceFormatError, load_instance, save_instance, validate_instance
from .milpmodel import BuildOptions, MILPModel, ModelBuildError, build_model
from .oracle import OracleLimits, OracleResult, brute_force_optimum
from .schedule import Schedule
from .solver import SolveResult, SolverConfig, solve, solve_lazy_capacity
from .validator import check_schedule, evaluate_objective, simulate_occupancy

__all__ = [
    "BatchCatalog",
    "BuildOptions",
    "Instance",
    "InstanceFormatError",
    "MILPModel",
    "ModelBuildError",
    "OracleLimits",
    "OracleResult",
    "Schedule",
    "SolveResult",
    "SolverConfig",
    "brute_force_optimum",
    "build_model",
    "check_schedule",
    "enumerate_batches",
    "evaluate_objective",
    "load_instance",
    "save_instance",
    "simulate_occupancy",
    "solve",
    "solve_lazy_capacity",
    "validate_instance",
    "__version__",
]
