"""Adam training of the control network on the adjoint gradient."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .adjoint import ObjectiveMode, grad_objective
from .cost import CostSpec
from .errors import (CostDomainError, IntegrationDivergedError, InvalidArgumentError,
                     NumericalError, TrainingFailedError)
from .model import EpidemicParams, StateLike
from .network import ControlNet, save_theta

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    iterations: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    steps: int = 1200
    clamp: bool = False
    time_scale: Optional[float] = None  # None: use the horizon
    max_backtracks: int = 30
    early_stop_tol: Optional[float] = None
    early_stop_window: int = 50
    checkpoint_every: int = 100
    checkpoint_dir: Optional[str] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.iterations < 1:
            raise InvalidArgumentError("iterations must be at least 1")


@dataclass
class TrainReport:
    history: List[float]
    initial_objective: float
    theta: np.ndarray
    objective: float
    best_theta: np.ndarray
    best_objective: float
    best_iteration: int
    backtracks: int
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "initial_objective": self.initial_objective,
            "final_objective": self.objective,
            "best_objective": self.best_objective,
            "best_iteration": self.best_iteration,
            "iterations": len(self.history),
            "backtracks": self.backtracks,
            "history": list(self.history),
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def adam_step(theta, grad, moment1, moment2, step_index: int, config: TrainConfig,
              learning_rate: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bias-corrected Adam update; returns new ``(theta, moment1, moment2)``."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    if step_index < 1:
        raise InvalidArgumentError("step_index starts at 1")
    lr = config.learning_rate if learning_rate is None else learning_rate
    m = config.beta1 * moment1 + (1.0 - config.beta1) * grad
    v = config.beta2 * moment2 + (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1 ** step_index)
    v_hat = v / (1.0 - config.beta2 ** step_index)
    return theta - lr * m_hat / (np.sqrt(v_hat) + config.epsilon), m, v


def train(
    net: ControlNet,
    cost: CostSpec,
    params: EpidemicParams,
    initial: StateLike,
    mode: ObjectiveMode = ObjectiveMode.NEW_INFECTIONS,
    config: TrainConfig = TrainConfig(),
) -> TrainReport:
    """Run ``config.iterations`` accepted Adam steps on ``J(theta)``.

    A step whose control leaves the cost domain (or whose integration
    diverges) is retried with half the learning rate, up to
    ``config.max_backtracks`` times.
    """
    start = time.perf_counter()

    def evaluate(theta):
        return grad_objective(net.with_theta(theta), cost, params, initial,
                              config.steps, mode, config.clamp)

    theta = np.array(net.theta)
    try:
        current = evaluate(theta)
    except (CostDomainError, IntegrationDivergedError) as exc:
        raise TrainingFailedError(f"initial control is inadmissible: {exc}", 0) from exc

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history: List[float] = []
    best_theta, best_J, best_it = theta, current.objective, 0
    initial_J = current.objective
    backtracks = 0
    quiet = 0
    for k in range(1, config.iterations + 1):
        lr = config.learning_rate
        for attempt in range(config.max_backtracks + 1):
            cand, m_new, v_new = adam_step(theta, current.grad, m, v, k, config, lr)
            try:
                result = evaluate(cand)
            except (CostDomainError, IntegrationDivergedError) as exc:
                backtracks += 1
                lr *= 0.5
                last_error = exc
                continue
            break
        else:
            raise TrainingFailedError(
                f"no admissible step at iteration {k} after {config.max_backtracks} backtracks",
                k, {"last_error": str(last_error), "objective": current.objective})
        if not np.isfinite(result.objective):
            raise TrainingFailedError(f"non-finite objective at iteration {k}", k)
        change = abs(result.objective - current.objective)
        theta, m, v, current = cand, m_new, v_new, result
        history.append(current.objective)
        if current.objective < best_J:
            best_theta, best_J, best_it = theta, current.objective, k
        if config.checkpoint_dir and k % config.checkpoint_every == 0:
            save_theta(Path(config.checkpoint_dir) / f"theta_{k:05d}.bin",
                       net.with_theta(theta), config.seed)
        if config.early_stop_tol is not None:
            quiet = quiet + 1 if change < config.early_stop_tol else 0
            if quiet >= config.early_stop_window:
                log.info("early stop at iteration %d", k)
                break

    return TrainReport(
        history=history,
        initial_objective=initial_J,
        theta=theta,
        objective=current.objective,
        best_theta=best_theta,
        best_objective=best_J,
        best_iteration=best_it,
        backtracks=backtracks,
        wall_time=time.perf_counter() - start,
    )
