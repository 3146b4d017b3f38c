"""Optimal intervention for a controlled SIR epidemic, parametrized by a small neural network
and trained with an exact adjoint gradient."""

from .adjoint import (AdjointSolution, GradResult, ObjectiveMode, adjoint_norms,
                      evaluate_objective, grad_objective, solve_adjoint_trajectory)
from .cost import (REFERENCE_WEIGHTS, CostKind, CostSpec, base_cost, calibrate_weight, cost,
                   cost_d1, cost_d2)
from .errors import (CostDomainError, IntegrationDivergedError, InvalidArgumentError,
                     NumericalError, TrainingFailedError)
from .experiment import (ExperimentConfig, export_cost_curves, export_figure_data,
                         run_baseline, run_cell, run_sweep)
from .model import EpidemicParams, SirState, Trajectory, dynamics, simulate
from .network import DEFAULT_LAYERS, ControlNet, init_xavier, load_theta, save_theta
from .ode import TimeGrid, integrate, rk4_step
from .theory import VerificationReport, solve_costate, verify_solution
from .trainer import TrainConfig, TrainReport, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "adam_step",
    "adjoint_norms",
    "AdjointSolution",
    "base_cost",
    "calibrate_weight",
    "ControlNet",
    "cost",
    "cost_d1",
    "cost_d2",
    "CostDomainError",
    "CostKind",
    "CostSpec",
    "dynamics",
    "EpidemicParams",
    "evaluate_objective",
    "ExperimentConfig",
    "export_cost_curves",
    "export_figure_data",
    "grad_objective",
    "GradResult",
    "init_xavier",
    "integrate",
    "IntegrationDivergedError",
    "InvalidArgumentError",
    "load_theta",
    "NumericalError",
    "ObjectiveMode",
    "DEFAULT_LAYERS",
    "REFERENCE_WEIGHTS",
    "rk4_step",
    "run_baseline",
    "run_cell",
    "run_sweep",
    "save_theta",
    "simulate",
    "SirState",
    "solve_adjoint_trajectory",
    "solve_costate",
    "VerificationReport",
    "TimeGrid",
    "train",
    "TrainConfig",
    "TrainingFailedError",
    "TrainReport",
    "Trajectory",
    "verify_solution",
]
