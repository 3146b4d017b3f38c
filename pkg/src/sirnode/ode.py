"""Fixed-step classical Runge-Kutta integration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import IntegrationDivergedError, InvalidArgumentError

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TimeGrid:
    """``steps`` uniform steps from ``t_start`` to ``t_end``.

    ``t_end < t_start`` gives a negative step, i.e. backward integration.
    """

    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidArgumentError(f"steps must be a positive integer, got {self.steps!r}")
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)) or self.t_start == self.t_end:
            raise InvalidArgumentError("grid endpoints must be finite and distinct")

    @property
    def step(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    def nodes(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.steps + 1)

    def reversed(self) -> "TimeGrid":
        return TimeGrid(self.t_end, self.t_start, self.steps)


def rk4_step(rhs: Rhs, t: float, y, h: float) -> np.ndarray:
    """One classical RK4 step ``y + h/6 (k1 + 2 k2 + 2 k3 + k4)``."""
    y = np.asarray(y, dtype=float)
    half = 0.5 * h
    k1 = _stage(rhs, t, y)
    k2 = _stage(rhs, t + half, y + half * k1)
    k3 = _stage(rhs, t + half, y + half * k2)
    k4 = _stage(rhs, t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _stage(rhs, t, y):
    k = np.asarray(rhs(t, y), dtype=float)
    if not np.all(np.isfinite(k)):
        raise IntegrationDivergedError(t, "non-finite stage derivative")
    return k


def integrate(
    rhs: Rhs,
    y0,
    grid: TimeGrid,
    check: Optional[Callable[[float, np.ndarray], None]] = None,
) -> np.ndarray:
    """Solution at every grid node, shape ``(steps + 1,) + y0.shape``.

    ``check(t, y)`` runs after each step and may raise to abort.
    """
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("initial value must be finite")
    times = grid.nodes()
    h = grid.step
    out = np.empty((grid.steps + 1,) + y.shape)
    out[0] = y
    for n in range(grid.steps):
        y = rk4_step(rhs, times[n], y, h)
        if check is not None:
            check(times[n + 1], y)
        out[n + 1] = y
    return out
