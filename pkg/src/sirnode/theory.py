"""Numerical checks of the structure of optimal controls.

Costates here use the Lagrangian convention. For the new-infections
objective they solve::

    p1' = -beta (1 - u) I (p2 - p1)
    p2' = -beta (1 - u) S (p2 - p1) + gamma p2
    p1(T) = -1,  p2(T) = 0,  p3 = 0

and for the infected-load objective ``p2'`` carries an extra ``-1`` and both
terminal values are zero. Stationarity reads
``lam c'(u) + beta S I (p1 - p2) - q = 0`` with ``q = 0`` wherever ``u > 0``.

Along any forward/costate pair driven by the same control,
``d/dt [S I (p1 - p2)] = -gamma p1 S I`` (new infections; plus ``S I`` for
infected load). On an interval where stationarity holds with ``q = 0`` this
gives ``u' = beta gamma S I p1 / (lam c''(u))``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .adjoint import ObjectiveMode, evaluate_objective
from .cost import CostSpec
from .errors import InvalidArgumentError
from .model import SIMPLEX_TOL, EpidemicParams, StateLike, Trajectory
from .network import ControlNet, atomic_write_bytes
from .ode import TimeGrid, integrate

#: threshold on du/dt when locating the decline onset
TAU_TOL = 1e-6


@dataclass(frozen=True)
class CostateSolution:
    times: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    q: np.ndarray
    mode: ObjectiveMode = ObjectiveMode.NEW_INFECTIONS


def _stage_values(trajectory: Trajectory, params: EpidemicParams, control=None):
    """``S, I, u`` at nodes and midpoints (length ``2 M + 1``).

    Midpoint states use cubic Hermite interpolation with slopes from the
    vector field; midpoint controls come from ``control`` when given, else
    from a cubic spline through the node controls.
    """
    from scipy.interpolate import CubicSpline

    t = trajectory.grid
    h = trajectory.step
    S, I, u = trajectory.s, trajectory.i, trajectory.controls
    b = params.beta * (1.0 - u)
    fS = -b * S * I
    fI = b * S * I - params.gamma * I
    mid_t = 0.5 * (t[:-1] + t[1:])
    Sm = 0.5 * (S[:-1] + S[1:]) + h / 8.0 * (fS[:-1] - fS[1:])
    Im = 0.5 * (I[:-1] + I[1:]) + h / 8.0 * (fI[:-1] - fI[1:])
    if control is not None:
        um = np.asarray(control(mid_t), dtype=float)
    else:
        um = CubicSpline(t, u)(mid_t)
    n = 2 * t.size - 1
    out = np.empty((3, n))
    out[:, ::2] = S, I, u
    out[:, 1::2] = Sm, Im, um
    return out


def solve_costate(
    trajectory: Trajectory,
    params: EpidemicParams,
    cost: CostSpec,
    mode: ObjectiveMode = ObjectiveMode.NEW_INFECTIONS,
    control: Optional[Callable] = None,
) -> CostateSolution:
    """Integrate the reduced costate system backward with RK4 on the trajectory grid."""
    mode = ObjectiveMode(mode)
    load = 1.0 if mode is ObjectiveMode.INFECTED_LOAD else 0.0
    S, I, u = _stage_values(trajectory, params, control)
    t0, half = trajectory.grid[0], 0.5 * trajectory.step
    beta, gamma = params.beta, params.gamma

    def rhs(t, p):
        k = int(round((t - t0) / half))
        b = beta * (1.0 - u[k])
        diff = p[1] - p[0]
        return np.array([-b * I[k] * diff, -b * S[k] * diff + gamma * p[1] - load])

    M = trajectory.grid.size - 1
    grid = TimeGrid(trajectory.grid[-1], trajectory.grid[0], M)
    terminal = np.array([0.0, 0.0]) if load else np.array([-1.0, 0.0])
    p = integrate(rhs, terminal, grid)[::-1]
    p1, p2 = p[:, 0], p[:, 1]
    un = trajectory.controls
    q = cost.lam * cost.d1(un) + beta * trajectory.s * trajectory.i * (p1 - p2)
    q = np.where(un > 0, 0.0, q)
    return CostateSolution(trajectory.grid.copy(), p1, p2, np.zeros_like(p1), q, mode)


def derivative(values, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative on a uniform grid."""
    f = np.asarray(values, dtype=float)
    if f.size < 5:
        raise InvalidArgumentError("need at least five samples")
    d = np.empty_like(f)
    d[2:-2] = (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / (12.0 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12.0 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12.0 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12.0 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12.0 * h)
    return d


@dataclass(frozen=True)
class IdentityReport:
    """Finite-difference derivative of ``S I (p1 - p2)`` against two right sides.

    ``stated`` is ``+gamma p1 S I``; ``derived`` is the sign obtained by
    differentiating the state and costate equations, ``-gamma p1 S I``
    (plus ``S I`` for infected load).
    """

    max_dev_stated: float
    max_dev_derived: float
    max_abs_rhs: float


def costate_identity_check(trajectory: Trajectory, costate: CostateSolution,
                           params: EpidemicParams) -> IdentityReport:
    S, I = trajectory.s, trajectory.i
    product = S * I * (costate.p1 - costate.p2)
    lhs = derivative(product, trajectory.step)
    stated = params.gamma * costate.p1 * S * I
    derived = -stated
    if costate.mode is ObjectiveMode.INFECTED_LOAD:
        derived = derived + S * I
    return IdentityReport(
        max_dev_stated=float(np.max(np.abs(lhs - stated))),
        max_dev_derived=float(np.max(np.abs(lhs - derived))),
        max_abs_rhs=float(np.max(np.abs(derived))),
    )


def detect_tau(times, du, tol: float = TAU_TOL) -> Optional[float]:
    """Earliest grid time after which ``du <= tol`` at every node.

    Returns ``None`` when even the final node has ``du > tol``.
    """
    times = np.asarray(times, dtype=float)
    rising = np.flatnonzero(np.asarray(du, dtype=float) > tol)
    if rising.size == 0:
        return float(times[0])
    last = rising[-1]
    if last == times.size - 1:
        return None
    return float(times[last + 1])


def costate_sign_onset(trajectory: Trajectory, costate: CostateSolution,
                       params: EpidemicParams) -> float:
    """Earliest node after which ``p1 < 0`` and ``beta S I (p1 - p2) < 0`` hold to the end.

    Such a point always exists for the new-infections objective because
    ``p1(T) = -1 < 0 = p2(T)``; for the infected-load objective both vanish
    at ``T`` and the last node is excluded from the test.
    """
    switching = params.beta * trajectory.s * trajectory.i * (costate.p1 - costate.p2)
    good = (costate.p1 < 0) & (switching < 0)
    if costate.mode is ObjectiveMode.INFECTED_LOAD:
        good[-1] = True
    bad = np.flatnonzero(~good)
    if bad.size == 0:
        return float(trajectory.grid[0])
    if bad[-1] == good.size - 1:
        return float(trajectory.grid[-1])
    return float(trajectory.grid[bad[-1] + 1])


def _window(times, tau):
    return np.asarray(times) >= tau - 1e-12


@dataclass(frozen=True)
class StationarityReport:
    times: np.ndarray
    residual: np.ndarray
    max_abs: float
    max_normalized: float
    p1_negative: bool
    switching_negative: bool


def kkt_stationarity_check(trajectory: Trajectory, costate: CostateSolution, cost: CostSpec,
                           params: EpidemicParams, tau: float) -> StationarityReport:
    """Residual of ``lam c'(u) + beta S I (p1 - p2)`` on ``[tau, T]`` and its sign structure."""
    w = _window(trajectory.grid, tau)
    S, I, u = trajectory.s[w], trajectory.i[w], trajectory.controls[w]
    p1, p2 = costate.p1[w], costate.p2[w]
    switching = params.beta * S * I * (p1 - p2)
    marginal = cost.lam * cost.d1(u)
    residual = marginal + switching
    scale = np.abs(marginal) + np.abs(switching)
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(scale > 0, np.abs(residual) / scale, 0.0)
    return StationarityReport(
        times=trajectory.grid[w],
        residual=residual,
        max_abs=float(np.max(np.abs(residual))),
        max_normalized=float(np.max(normalized)),
        p1_negative=bool(np.all(p1 < 0)),
        switching_negative=bool(np.all(switching < 0)),
    )


def predicted_u_prime(trajectory: Trajectory, costate: CostateSolution, cost: CostSpec,
                      params: EpidemicParams) -> np.ndarray:
    """``beta gamma S I p1 / (lam c''(u))`` at every node (infected load: ``beta S I (gamma p1 - 1) / ...``)."""
    S, I = trajectory.s, trajectory.i
    factor = params.gamma * costate.p1
    if costate.mode is ObjectiveMode.INFECTED_LOAD:
        factor = factor - 1.0
    return params.beta * S * I * factor / (cost.lam * cost.d2(trajectory.controls))


@dataclass(frozen=True)
class UPrimeReport:
    max_abs_dev: float
    max_rel_dev: float
    sign_agreement: float
    formula_negative: bool


def u_prime_formula_check(du, trajectory: Trajectory, costate: CostateSolution, cost: CostSpec,
                          params: EpidemicParams, tau: float) -> UPrimeReport:
    """Compare the control slope ``du`` with the stationarity prediction on ``[tau, T]``."""
    w = _window(trajectory.grid, tau)
    pred = predicted_u_prime(trajectory, costate, cost, params)[w]
    du = np.asarray(du, dtype=float)[w]
    dev = np.abs(du - pred)
    return UPrimeReport(
        max_abs_dev=float(np.max(dev)),
        max_rel_dev=float(np.max(dev) / max(np.max(np.abs(pred)), np.finfo(float).tiny)),
        sign_agreement=float(np.mean(np.sign(du) == np.sign(pred))),
        formula_negative=bool(np.all(pred < 0)),
    )


@dataclass(frozen=True)
class SimplexReport:
    max_sum_deviation: float
    min_component: float

    @property
    def ok(self) -> bool:
        return self.max_sum_deviation <= SIMPLEX_TOL and self.min_component >= 0.0


def simplex_check(trajectory: Trajectory) -> SimplexReport:
    return SimplexReport(
        max_sum_deviation=float(np.max(np.abs(trajectory.states.sum(axis=1) - 1.0))),
        min_component=float(np.min(trajectory.states)),
    )


def _cumulative_trapezoid(g, h):
    """Cumulative trapezoid with the ``h^2`` Euler-Maclaurin end correction."""
    trap = np.concatenate([[0.0], np.cumsum(0.5 * h * (g[1:] + g[:-1]))])
    dg = derivative(g, h)
    return trap - h * h / 12.0 * (dg - dg[0])


@dataclass(frozen=True)
class ClosedFormReport:
    max_dev_s: float
    max_dev_i: float
    max_dev_r: float


def closed_form_check(trajectory: Trajectory, params: EpidemicParams) -> ClosedFormReport:
    """Compare the stored states with their integral representations.

    ``S(t) = S(0) exp(-int beta (1 - u) I)``, ``I(t) = I(0) exp(int beta (1 - u) S - gamma)``
    and ``R(t) = R(0) + gamma int I``, the integrals taken by end-corrected
    trapezoidal quadrature over the stored nodes.
    """
    h = trajectory.step
    S, I, R, u = trajectory.s, trajectory.i, trajectory.r, trajectory.controls
    b = params.beta * (1.0 - u)
    s_closed = S[0] * np.exp(-_cumulative_trapezoid(b * I, h))
    i_closed = I[0] * np.exp(_cumulative_trapezoid(b * S - params.gamma, h))
    r_closed = R[0] + params.gamma * _cumulative_trapezoid(I, h)
    return ClosedFormReport(
        max_dev_s=float(np.max(np.abs(s_closed - S))),
        max_dev_i=float(np.max(np.abs(i_closed - I))),
        max_dev_r=float(np.max(np.abs(r_closed - R))),
    )


@dataclass
class VerificationReport:
    tau: Optional[float]
    decline_onset: Optional[float]
    costate_onset: float
    max_u: float
    min_u: float
    hypotheses_met: bool
    p1_negative: Optional[bool]
    switching_negative: Optional[bool]
    formula_negative: Optional[bool]
    decline_holds: Optional[bool]
    kkt_max_abs: Optional[float]
    kkt_max_normalized: Optional[float]
    u_prime_max_abs_dev: Optional[float]
    u_prime_max_rel_dev: Optional[float]
    u_prime_sign_agreement: Optional[float]
    identity_max_dev_stated: float
    identity_max_dev_derived: float
    simplex_max_sum_deviation: float
    simplex_min_component: float
    closed_form_max_dev: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def verify_solution(
    net: ControlNet,
    cost: CostSpec,
    params: EpidemicParams,
    initial: StateLike,
    steps: int = 1200,
    mode: ObjectiveMode = ObjectiveMode.NEW_INFECTIONS,
    clamp: bool = False,
):
    """Run every structural check on a trained control.

    Returns ``(report, trajectory, costate)``.
    """
    _, trajectory = evaluate_objective(net, cost, params, initial, steps, mode, clamp)
    control = None if clamp else net
    costate = solve_costate(trajectory, params, cost, mode, control)
    du = net.du_dt(trajectory.grid)
    # tau must satisfy both: u no longer rising, and the costate signs of the argument hold
    decline = detect_tau(trajectory.grid, du)
    onset = costate_sign_onset(trajectory, costate, params)
    tau = None if decline is None else max(decline, onset)
    if tau is not None and tau >= trajectory.grid[-1]:
        tau = None
    notes = []
    hypotheses = cost.kind.is_barrier
    if not hypotheses:
        notes.append("finite cost at u=1: barrier hypothesis not met, checks reported only")
    ident = costate_identity_check(trajectory, costate, params)
    simplex = simplex_check(trajectory)
    closed = closed_form_check(trajectory, params)
    fields = dict(p1_negative=None, switching_negative=None, formula_negative=None,
                  kkt_max_abs=None, kkt_max_normalized=None, u_prime_max_abs_dev=None,
                  u_prime_max_rel_dev=None, u_prime_sign_agreement=None)
    if tau is None:
        notes.append("no decline onset before T" if decline is None
                     else "costate signs never settle before T")
    else:
        st = kkt_stationarity_check(trajectory, costate, cost, params, tau)
        up = u_prime_formula_check(du, trajectory, costate, cost, params, tau)
        fields.update(p1_negative=st.p1_negative, switching_negative=st.switching_negative,
                      formula_negative=up.formula_negative, kkt_max_abs=st.max_abs,
                      kkt_max_normalized=st.max_normalized, u_prime_max_abs_dev=up.max_abs_dev,
                      u_prime_max_rel_dev=up.max_rel_dev, u_prime_sign_agreement=up.sign_agreement)
    report = VerificationReport(
        tau=tau,
        decline_onset=decline,
        costate_onset=onset,
        max_u=float(np.max(trajectory.controls)),
        min_u=float(np.min(trajectory.controls)),
        hypotheses_met=hypotheses,
        decline_holds=tau is not None and tau < trajectory.grid[-1],
        identity_max_dev_stated=ident.max_dev_stated,
        identity_max_dev_derived=ident.max_dev_derived,
        simplex_max_sum_deviation=simplex.max_sum_deviation,
        simplex_min_component=simplex.min_component,
        closed_form_max_dev=max(closed.max_dev_s, closed.max_dev_r),
        notes=notes,
        **fields,
    )
    return report, trajectory, costate


def write_costate_csv(path, trajectory: Trajectory, costate: CostateSolution) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "S", "I", "R", "u", "p1", "p2", "p3", "q"])
    for k, t in enumerate(trajectory.grid):
        writer.writerow([repr(float(v)) for v in (
            t, *trajectory.states[k], trajectory.controls[k],
            costate.p1[k], costate.p2[k], costate.p3[k], costate.q[k])])
    atomic_write_bytes(path, buf.getvalue().encode())
