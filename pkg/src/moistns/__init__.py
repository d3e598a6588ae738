"""Moist compressible Navier-Stokes on the unit box with warm-rain microphysics."""
from .dynamics import State, equilibrium_state, initial_state, rhs
from .errors import (DomainError, MapDegenerate, MoistNSError, ParseError, SolverDiverged, StateInvalid,
                     ValidationError)
from .grid import Grid
from .params import PhysParams, RunConfig, gamma, load_config, loads_config
from .timestepper import StepReport, run, step

__version__ = "0.1.0"

__all__ = [
    "DomainError", "Grid", "MapDegenerate", "MoistNSError", "ParseError", "PhysParams", "RunConfig",
    "SolverDiverged", "State", "StateInvalid", "StepReport", "ValidationError", "equilibrium_state", "gamma",
    "initial_state", "load_config", "loads_config", "rhs", "run", "step",
]
