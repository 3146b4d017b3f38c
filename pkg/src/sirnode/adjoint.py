"""Objective evaluation and adjoint gradients for the neural control.

The objective is carried as a fourth state component ``z`` with
``z' = running cost`` and ``z(0) = 0`` so that ``J = z(T)`` is a pure
terminal loss. Two running costs are supported:

* ``NEW_INFECTIONS``: ``beta (1 - u) S I + lam c(u)``, so ``J = S(0) - S(T) + lam int c``
* ``INFECTED_LOAD``: ``I + lam c(u)``, so ``J = (R(T) - R(0)) / gamma + lam int c``

Adjoints follow the minimization convention: ``p(t) = dJ/dy(t)`` with
``p(T) = (0, 0, 0, 1)`` and ``a(0) = dJ/dtheta``. For ``NEW_INFECTIONS`` the
costate of the Lagrangian formulation with ``p(T) = (-1, 0, 0)`` is
``p_x(t) - (1, 0, 0)``; see :mod:`sirnode.theory`.

Controls are evaluated at every Runge-Kutta stage time, i.e. at the grid
nodes and midpoints, which are stored in one array of length ``2 M + 1``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .cost import CostSpec
from .errors import IntegrationDivergedError, InvalidArgumentError, NumericalError
from .model import NEGATIVE_TOL, EpidemicParams, StateLike, Trajectory, _unpack
from .network import ControlNet, atomic_write_bytes
from .ode import TimeGrid

#: upper clamp value when clamping is enabled
CLAMP_MAX = 1.0 - 1e-6


class ObjectiveMode(str, enum.Enum):
    NEW_INFECTIONS = "new-infections"
    INFECTED_LOAD = "infected-load"


@dataclass(frozen=True)
class GradResult:
    grad: np.ndarray
    objective: float
    trajectory: Trajectory


@dataclass(frozen=True)
class AdjointSolution:
    """Adjoint ``(p_S, p_I, p_R, p_z)`` at the grid nodes and ``dJ/dtheta``."""

    times: np.ndarray
    p: np.ndarray
    grad: np.ndarray
    stage_weights: np.ndarray


@dataclass
class _Forward:
    times: np.ndarray      # stage times, length 2M + 1
    u: np.ndarray          # effective control at stage times
    mask: Optional[np.ndarray]  # d(effective u)/d(raw u) when clamped
    dcost: np.ndarray      # lam * c'(u) at stage times
    nodes: np.ndarray      # (M + 1, 4) augmented state
    stages: np.ndarray     # (M, 4, 2) stage values of (S, I)
    h: float


def as_grid(grid: Union[TimeGrid, int], params: EpidemicParams) -> TimeGrid:
    if isinstance(grid, TimeGrid):
        if grid.step <= 0:
            raise InvalidArgumentError("objective grid must run forward in time")
        return grid
    return TimeGrid(0.0, params.horizon, int(grid))


def stage_controls(net: ControlNet, grid: TimeGrid, clamp: bool = False):
    """Stage times and effective control values, plus the clamp mask."""
    times = np.linspace(grid.t_start, grid.t_end, 2 * grid.steps + 1)
    raw = net(times)
    if not clamp:
        return times, raw, None
    u = np.clip(raw, 0.0, CLAMP_MAX)
    mask = ((raw >= 0.0) & (raw <= CLAMP_MAX)).astype(float)
    return times, u, mask


def _forward(net, cost: CostSpec, params, initial, grid, mode, clamp) -> _Forward:
    times, u, mask = stage_controls(net, grid, clamp)
    lc = cost.lam * cost.value(u, times)
    dc = cost.lam * cost.d1(u, times)
    beta, gamma = params.beta, params.gamma
    load = ObjectiveMode(mode) is ObjectiveMode.INFECTED_LOAD
    h = grid.step
    hh, h6 = 0.5 * h, h / 6.0
    S, I, R = _unpack(initial)
    Z = 0.0
    b = (beta * (1.0 - u)).tolist()
    lcl = lc.tolist()
    node_rows = [(S, I, R, Z)]
    stage_rows = []
    for n in range(grid.steps):
        j = 2 * n
        ba, bm, bb = b[j], b[j + 1], b[j + 2]
        f = ba * S * I
        k1S, k1I, k1R = -f, f - gamma * I, gamma * I
        k1Z = (I if load else f) + lcl[j]
        S2, I2 = S + hh * k1S, I + hh * k1I
        f = bm * S2 * I2
        k2S, k2I, k2R = -f, f - gamma * I2, gamma * I2
        k2Z = (I2 if load else f) + lcl[j + 1]
        S3, I3 = S + hh * k2S, I + hh * k2I
        f = bm * S3 * I3
        k3S, k3I, k3R = -f, f - gamma * I3, gamma * I3
        k3Z = (I3 if load else f) + lcl[j + 1]
        S4, I4 = S + h * k3S, I + h * k3I
        f = bb * S4 * I4
        k4S, k4I, k4R = -f, f - gamma * I4, gamma * I4
        k4Z = (I4 if load else f) + lcl[j + 2]
        stage_rows.append(((S, I), (S2, I2), (S3, I3), (S4, I4)))
        S = S + h6 * (k1S + 2.0 * k2S + 2.0 * k3S + k4S)
        I = I + h6 * (k1I + 2.0 * k2I + 2.0 * k3I + k4I)
        R = R + h6 * (k1R + 2.0 * k2R + 2.0 * k3R + k4R)
        Z = Z + h6 * (k1Z + 2.0 * k2Z + 2.0 * k3Z + k4Z)
        if not (S >= -NEGATIVE_TOL and I >= -NEGATIVE_TOL and R >= -NEGATIVE_TOL and abs(Z) < np.inf):
            raise IntegrationDivergedError(times[j + 2], f"inadmissible state {(S, I, R, Z)!r}")
        node_rows.append((S, I, R, Z))
    return _Forward(times, u, mask, dc, np.array(node_rows), np.array(stage_rows), h)


def _trajectory(fw: _Forward) -> Trajectory:
    return Trajectory(fw.times[::2], fw.nodes[:, :3], fw.u[::2])


def evaluate_objective(
    net: ControlNet,
    cost: CostSpec,
    params: EpidemicParams,
    initial: StateLike,
    grid: Union[TimeGrid, int] = 1200,
    mode: ObjectiveMode = ObjectiveMode.NEW_INFECTIONS,
    clamp: bool = False,
) -> Tuple[float, Trajectory]:
    """Objective ``J`` and the forward trajectory.

    Raises :class:`~sirnode.errors.CostDomainError` if a stage control leaves
    the cost domain.
    """
    fw = _forward(net, cost, params, initial, as_grid(grid, params), mode, clamp)
    return float(fw.nodes[-1, 3]), _trajectory(fw)


def _discrete_adjoint(fw: _Forward, params, mode):
    """Reverse sweep through the RK4 steps: exact gradient of the discrete ``J``."""
    beta, gamma = params.beta, params.gamma
    load = ObjectiveMode(mode) is ObjectiveMode.INFECTED_LOAD
    h = fw.h
    M = fw.stages.shape[0]
    b = (beta * (1.0 - fw.u)).tolist()
    dc = fw.dcost.tolist()
    stages = fw.stages.tolist()
    W = [0.0] * (2 * M + 1)
    # adjoint of R stays 0 and of z stays 1: nothing depends on them
    lS, lI, lR, lZ = 0.0, 0.0, 0.0, 1.0
    rows = [(lS, lI, lR, lZ)]
    zn = 0.0 if load else 1.0
    zl = 1.0 if load else 0.0

    def stage(bk, dck, S, I, cS, cI, cR, cZ):
        d = cS - cI - zn * cZ
        return (-bk * I * d,
                -bk * S * d - gamma * cI + gamma * cR + zl * cZ,
                beta * S * I * d + cZ * dck)

    for n in reversed(range(M)):
        j = 2 * n
        (S1, I1), (S2, I2), (S3, I3), (S4, I4) = stages[n]
        w6, w3 = h / 6.0, h / 3.0
        YS4, YI4, g4 = stage(b[j + 2], dc[j + 2], S4, I4, w6 * lS, w6 * lI, w6 * lR, w6 * lZ)
        YS3, YI3, g3 = stage(b[j + 1], dc[j + 1], S3, I3,
                             w3 * lS + h * YS4, w3 * lI + h * YI4, w3 * lR, w3 * lZ)
        YS2, YI2, g2 = stage(b[j + 1], dc[j + 1], S2, I2,
                             w3 * lS + 0.5 * h * YS3, w3 * lI + 0.5 * h * YI3, w3 * lR, w3 * lZ)
        YS1, YI1, g1 = stage(b[j], dc[j], S1, I1,
                             w6 * lS + 0.5 * h * YS2, w6 * lI + 0.5 * h * YI2, w6 * lR, w6 * lZ)
        lS = lS + YS1 + YS2 + YS3 + YS4
        lI = lI + YI1 + YI2 + YI3 + YI4
        W[j] += g1
        W[j + 1] += g2 + g3
        W[j + 2] += g4
        rows.append((lS, lI, lR, lZ))
    return np.array(rows[::-1]), np.array(W)


def _continuous_adjoint(fw: _Forward, params, mode):
    """Classical RK4 on the continuous adjoint equations, run backward.

    States at midpoints come from cubic Hermite interpolation of the stored
    node values, using the vector field for the node slopes.
    """
    beta, gamma = params.beta, params.gamma
    load = ObjectiveMode(mode) is ObjectiveMode.INFECTED_LOAD
    zn = 0.0 if load else 1.0
    zl = 1.0 if load else 0.0
    h = fw.h
    M = fw.nodes.shape[0] - 1
    u = fw.u
    S, I = fw.nodes[:, 0], fw.nodes[:, 1]
    bn = beta * (1.0 - u[::2])
    fS = -bn * S * I
    fI = bn * S * I - gamma * I
    Sm = 0.5 * (S[:-1] + S[1:]) + h / 8.0 * (fS[:-1] - fS[1:])
    Im = 0.5 * (I[:-1] + I[1:]) + h / 8.0 * (fI[:-1] - fI[1:])

    def rhs(k, Sk, Ik, pS, pI, pR, pZ):
        bk = beta * (1.0 - u[k])
        d = pS - pI - zn * pZ
        dS = bk * Ik * d
        dI = bk * Sk * d + gamma * pI - gamma * pR - zl * pZ
        g = beta * Sk * Ik * d + pZ * fw.dcost[k]
        return dS, dI, g

    W = np.zeros(2 * M + 1)
    p = np.zeros((M + 1, 4))
    pS, pI, pR, pZ = 0.0, 0.0, 0.0, 1.0
    p[M] = (pS, pI, pR, pZ)
    for n in reversed(range(M)):
        j = 2 * n
        k1S, k1I, g1 = rhs(j + 2, S[n + 1], I[n + 1], pS, pI, pR, pZ)
        k2S, k2I, g2 = rhs(j + 1, Sm[n], Im[n], pS - 0.5 * h * k1S, pI - 0.5 * h * k1I, pR, pZ)
        k3S, k3I, g3 = rhs(j + 1, Sm[n], Im[n], pS - 0.5 * h * k2S, pI - 0.5 * h * k2I, pR, pZ)
        k4S, k4I, g4 = rhs(j, S[n], I[n], pS - h * k3S, pI - h * k3I, pR, pZ)
        pS = pS - h / 6.0 * (k1S + 2.0 * k2S + 2.0 * k3S + k4S)
        pI = pI - h / 6.0 * (k1I + 2.0 * k2I + 2.0 * k3I + k4I)
        W[j + 2] += h / 6.0 * g1
        W[j + 1] += h / 3.0 * (g2 + g3)
        W[j] += h / 6.0 * g4
        p[n] = (pS, pI, pR, pZ)
    return p, W


def solve_adjoint_trajectory(
    net: ControlNet,
    cost: CostSpec,
    params: EpidemicParams,
    initial: StateLike,
    grid: Union[TimeGrid, int] = 1200,
    mode: ObjectiveMode = ObjectiveMode.NEW_INFECTIONS,
    clamp: bool = False,
    method: str = "discrete",
) -> Tuple[AdjointSolution, GradResult]:
    """Forward solve, backward adjoint solve, and the parameter gradient.

    ``method="discrete"`` differentiates the RK4 scheme exactly (the default,
    and the one used for training). ``method="continuous"`` integrates the
    adjoint equations with RK4 over the interpolated forward trajectory; the
    two agree to the order of the integrator.
    """
    grid = as_grid(grid, params)
    fw = _forward(net, cost, params, initial, grid, mode, clamp)
    if method == "discrete":
        p, W = _discrete_adjoint(fw, params, mode)
    elif method == "continuous":
        p, W = _continuous_adjoint(fw, params, mode)
    else:
        raise InvalidArgumentError(f"unknown adjoint method {method!r}")
    if fw.mask is not None:
        W = W * fw.mask
    if not np.all(np.isfinite(W)):
        bad = np.flatnonzero(~np.isfinite(W))[0]
        raise NumericalError(f"non-finite adjoint at t={fw.times[bad]:g}")
    grad = net.vjp(fw.times, W)
    objective = float(fw.nodes[-1, 3])
    solution = AdjointSolution(fw.times[::2], p, grad, W)
    return solution, GradResult(grad, objective, _trajectory(fw))


def grad_objective(
    net: ControlNet,
    cost: CostSpec,
    params: EpidemicParams,
    initial: StateLike,
    grid: Union[TimeGrid, int] = 1200,
    mode: ObjectiveMode = ObjectiveMode.NEW_INFECTIONS,
    clamp: bool = False,
    method: str = "discrete",
) -> GradResult:
    """``J`` and ``dJ/dtheta`` for the control network."""
    return solve_adjoint_trajectory(net, cost, params, initial, grid, mode, clamp, method)[1]


def adjoint_norms(net: ControlNet, solution: AdjointSolution) -> np.ndarray:
    """Norm of the accumulated parameter sensitivity from stage times ``>= t``, per node."""
    stage_times = np.linspace(solution.times[0], solution.times[-1], solution.stage_weights.size)
    jac = net.per_sample_grad(stage_times) * solution.stage_weights[:, None]
    tail = np.cumsum(jac[::-1], axis=0)[::-1]
    return np.linalg.norm(tail[::2], axis=1)


def write_adjoint_csv(path, net: ControlNet, solution: AdjointSolution, trajectory: Trajectory) -> None:
    """Diagnostic dump of ``t, S, I, R, u, p1, p2, p3, a_norm``."""
    norms = adjoint_norms(net, solution)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "S", "I", "R", "u", "p1", "p2", "p3", "a_norm"])
    for k, t in enumerate(trajectory.grid):
        writer.writerow([repr(float(v)) for v in (
            t, *trajectory.states[k], trajectory.controls[k], *solution.p[k, :3], norms[k])])
    atomic_write_bytes(path, buf.getvalue().encode())
