"""Parareal for index-1 differential-algebraic systems with singular mass matrices."""

from .dae import DaeSystem, StateVector, constraint_residual, make_consistent, residual, split_state
from .linalg import ProjectorPair, build_projectors, solve_linear
from .models import build_analytic_2x2, build_coupled, build_model, build_rod, CoupledToyModel, RodModel
from .parareal import (
    NormMode,
    PararealConfig,
    PararealState,
    RunReport,
    UpdateMode,
    WindowGrid,
    increment_norm,
    matching_residual,
    run,
    update_window,
)
from .stepper import Propagator, PropagatorConfig, euler_step, propagate_through

__version__ = "0.1.0"
