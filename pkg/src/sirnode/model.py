"""Controlled SIR dynamics on normalized compartment fractions.

The state ``x = (S, I, R)`` holds fractions of a population of size ``N``.
A control ``u`` scales the transmission rate to ``beta * (1 - u)``::

    S' = -beta (1 - u) S I
    I' =  beta (1 - u) S I - gamma I
    R' =  gamma I
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import IntegrationDivergedError, InvalidArgumentError
from .ode import TimeGrid, integrate

#: absolute tolerance for simplex membership
SIMPLEX_TOL = 1e-9
#: compartments more negative than this abort an integration
NEGATIVE_TOL = 1e-12


@dataclass(frozen=True)
class EpidemicParams:
    """Rates (1/day), population size and horizon (days)."""

    beta: float = 0.3
    gamma: float = 0.1
    population: float = 1e7
    horizon: float = 120.0

    def __post_init__(self):
        for name in ("beta", "gamma", "population", "horizon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
        if self.beta <= 0 or self.gamma <= 0:
            raise InvalidArgumentError("beta and gamma must be positive")
        if self.population < 1:
            raise InvalidArgumentError("population must be at least 1")
        if self.horizon <= 0:
            raise InvalidArgumentError("horizon must be positive")

    @property
    def basic_reproduction(self) -> float:
        return self.beta / self.gamma


@dataclass(frozen=True)
class SirState:
    """Susceptible, infectious and removed fractions."""

    s: float
    i: float
    r: float

    def __post_init__(self):
        values = (self.s, self.i, self.r)
        if not all(math.isfinite(v) for v in values):
            raise InvalidArgumentError(f"non-finite state {values!r}")
        if min(values) < 0:
            raise InvalidArgumentError(f"negative compartment in {values!r}")
        if abs(math.fsum(values) - 1.0) > SIMPLEX_TOL:
            raise InvalidArgumentError(f"state {values!r} does not sum to 1")

    @classmethod
    def from_counts(cls, infected: float, population: float, removed: float = 0.0) -> "SirState":
        """Normalize head counts; the susceptible count is the remainder."""
        if not 0 <= infected + removed <= population:
            raise InvalidArgumentError("initial counts must lie within the population")
        i = infected / population
        r = removed / population
        return cls(1.0 - i - r, i, r)

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.i, self.r])


StateLike = Union[SirState, Sequence[float], np.ndarray]


def _unpack(state: StateLike):
    if isinstance(state, SirState):
        return state.s, state.i, state.r
    s, i, r = (float(v) for v in state)
    if not (math.isfinite(s) and math.isfinite(i) and math.isfinite(r)):
        raise InvalidArgumentError(f"non-finite state {(s, i, r)!r}")
    return s, i, r


def _check_u(u: float) -> float:
    u = float(u)
    if not math.isfinite(u):
        raise InvalidArgumentError(f"non-finite control {u!r}")
    return u


def dynamics(state: StateLike, u: float, params: EpidemicParams) -> np.ndarray:
    """Right-hand side ``f(x, u)``; ``u`` is not range checked."""
    s, i, _ = _unpack(state)
    u = _check_u(u)
    flow = params.beta * (1.0 - u) * s * i
    recovery = params.gamma * i
    return np.array([-flow, flow - recovery, recovery])


def jacobian_state(state: StateLike, u: float, params: EpidemicParams) -> np.ndarray:
    """``df/dx`` with rows indexing components of ``f`` and columns ``(S, I, R)``."""
    s, i, _ = _unpack(state)
    b = params.beta * (1.0 - _check_u(u))
    g = params.gamma
    return np.array([
        [-b * i, -b * s, 0.0],
        [b * i, b * s - g, 0.0],
        [0.0, g, 0.0],
    ])


def df_du(state: StateLike, u: float, params: EpidemicParams) -> np.ndarray:
    """``df/du``; independent of ``u`` since ``f`` is affine in it."""
    s, i, _ = _unpack(state)
    _check_u(u)
    flow = params.beta * s * i
    return np.array([flow, -flow, 0.0])


def effective_reproduction(state: StateLike, u: float, params: EpidemicParams) -> float:
    """``(beta / gamma) (1 - u) S``; infections grow while this exceeds one."""
    s, _, _ = _unpack(state)
    return params.beta / params.gamma * (1.0 - _check_u(u)) * s


@dataclass(frozen=True)
class Trajectory:
    """Compartment fractions and control values on a uniform time grid.

    ``states`` has shape ``(M + 1, 3)`` with columns ``S, I, R``.
    """

    grid: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise InvalidArgumentError("grid needs at least two nodes")
        steps = np.diff(grid)
        if np.any(steps <= 0):
            raise InvalidArgumentError("grid must be strictly increasing")
        h = (grid[-1] - grid[0]) / (grid.size - 1)
        if np.max(np.abs(steps - h)) > 1e-9 * max(1.0, abs(grid[-1])):
            raise InvalidArgumentError("grid must be uniform")
        if states.shape != (grid.size, 3) or controls.shape != grid.shape:
            raise InvalidArgumentError("states/controls do not match the grid")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @property
    def step(self) -> float:
        return (self.grid[-1] - self.grid[0]) / (self.grid.size - 1)

    @property
    def s(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def i(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def r(self) -> np.ndarray:
        return self.states[:, 2]

    def __len__(self):
        return self.grid.size

    def state(self, k: int) -> SirState:
        return SirState(*self.states[k])

    def nearest_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.grid - t)))


def _check_compartments(t, y):
    if not np.all(np.isfinite(y)):
        raise IntegrationDivergedError(t, "non-finite compartment")
    if np.min(y[:3]) < -NEGATIVE_TOL:
        raise IntegrationDivergedError(t, f"negative compartment {np.min(y[:3]):.3e}")


def simulate(
    params: EpidemicParams,
    initial: StateLike,
    control: Union[float, Callable[[float], float]],
    steps: int = 1200,
) -> Trajectory:
    """Integrate the controlled model over ``[0, horizon]`` with RK4.

    ``control`` is either a constant or a callable of time; it is evaluated
    at the Runge-Kutta stage times.
    """
    u_of_t = control if callable(control) else (lambda t, c=float(control): c)
    beta, gamma = params.beta, params.gamma

    def rhs(t, y):
        u = u_of_t(t)
        flow = beta * (1.0 - u) * y[0] * y[1]
        recovery = gamma * y[1]
        return np.array([-flow, flow - recovery, recovery])

    grid = TimeGrid(0.0, params.horizon, steps)
    y0 = np.array(_unpack(initial), dtype=float)
    states = integrate(rhs, y0, grid, check=_check_compartments)
    times = grid.nodes()
    controls = np.array([u_of_t(t) for t in times], dtype=float)
    return Trajectory(times, states, controls)
