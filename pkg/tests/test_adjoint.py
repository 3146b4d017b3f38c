import numpy as np
import pytest

from sirnode.adjoint import (CLAMP_MAX, ObjectiveMode, adjoint_norms, evaluate_objective,
                             grad_objective, solve_adjoint_trajectory, stage_controls,
                             write_adjoint_csv)
from sirnode.cost import CostKind, CostSpec
from sirnode.errors import CostDomainError, IntegrationDivergedError
from sirnode.model import EpidemicParams, SirState, simulate
from sirnode.network import constant_net, init_xavier
from sirnode.ode import TimeGrid
from sirnode.theory import solve_costate

MODES = list(ObjectiveMode)


def _perturbed(seed, scale=0.3):
    net = init_xavier(seed, time_scale=120.0)
    rng = np.random.default_rng(seed + 100)
    theta = net.theta + scale * rng.standard_normal(net.size)
    theta[-1] = 0.1  # output bias: keep u well inside every barrier domain
    return net.with_theta(theta)


def test_stage_controls_cover_nodes_and_midpoints():
    net = init_xavier(0, 120.0)
    times, u = stage_controls(net, TimeGrid(0, 120, 4))[:2]
    np.testing.assert_allclose(times, np.linspace(0, 120, 9))
    np.testing.assert_allclose(u, net(times))


def test_uncontrolled_objective_equals_drop_in_susceptibles(params, x0):
    J, tr = evaluate_objective(constant_net(0.0, 120.0), CostSpec("c3", 0.05), params, x0, 1200)
    base = simulate(params, x0, 0.0, 1200)
    assert J == pytest.approx(x0.s - base.s[-1], abs=1e-14)
    np.testing.assert_allclose(tr.states, base.states, atol=1e-15)


@pytest.mark.parametrize("kind", list(CostKind))
def test_constant_control_objectives(kind, params, x0):
    u, lam = 0.3, 0.05
    spec = CostSpec(kind, lam)
    net = constant_net(u, 120.0)
    J, tr = evaluate_objective(net, spec, params, x0, 600)
    assert J == pytest.approx(x0.s - tr.s[-1] + lam * spec.value(u) * 120.0, rel=1e-12)
    J2, tr2 = evaluate_objective(net, spec, params, x0, 600, ObjectiveMode.INFECTED_LOAD)
    assert J2 == pytest.approx((tr2.r[-1] - x0.r) / params.gamma + lam * spec.value(u) * 120.0, rel=1e-10)


def test_logistic_closed_form_gradient():
    # gamma = 0 makes I logistic with rate k = beta (1 - u); J = I(T) - I(0) + lam c(u) T
    p = EpidemicParams(beta=0.3, gamma=1e-300, horizon=40.0)
    x0 = SirState(0.99, 0.01, 0.0)
    u, lam = 0.2, 0.05
    spec = CostSpec("c3", lam)
    res = grad_objective(constant_net(u, 40.0), spec, p, x0, 2000)
    k = p.beta * (1 - u)
    e = np.exp(k * p.horizon)
    I_T = x0.i * e / (1 - x0.i + x0.i * e)
    dJ_du = -p.beta * p.horizon * I_T * (1 - I_T) + lam * spec.d1(u) * p.horizon
    assert res.objective == pytest.approx(I_T - x0.i + lam * spec.value(u) * p.horizon, rel=1e-10)
    assert np.sum(res.grad) == pytest.approx(dJ_du, rel=1e-8)
    assert np.count_nonzero(res.grad) == 1


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("kind", ["c1", "c4"])
def test_gradient_matches_central_differences(mode, kind, params, x0):
    net = _perturbed(11)
    spec = CostSpec(kind, 0.05)
    g = grad_objective(net, spec, params, x0, 120, mode).grad
    rng = np.random.default_rng(1)
    eps = 1e-6
    for j in rng.choice(net.size, 12, replace=False):
        e = np.zeros(net.size)
        e[j] = eps
        jp = evaluate_objective(net.with_theta(net.theta + e), spec, params, x0, 120, mode)[0]
        jm = evaluate_objective(net.with_theta(net.theta - e), spec, params, x0, 120, mode)[0]
        assert g[j] == pytest.approx((jp - jm) / (2 * eps), rel=1e-5, abs=1e-10)


@pytest.mark.parametrize("mode", MODES)
def test_continuous_adjoint_agrees(mode, params, x0):
    net = _perturbed(4)
    spec = CostSpec("c2", 0.05)
    gd = grad_objective(net, spec, params, x0, 1200, mode).grad
    gc = grad_objective(net, spec, params, x0, 1200, mode, method="continuous").grad
    assert np.linalg.norm(gc - gd) <= 1e-5 * np.linalg.norm(gd)


def test_adjoint_terminal_condition_and_costate_relation(params, x0):
    net = _perturbed(8)
    spec = CostSpec("c3", 0.05)
    sol, res = solve_adjoint_trajectory(net, spec, params, x0, 1200)
    np.testing.assert_allclose(sol.p[-1], [0, 0, 0, 1], atol=1e-15)
    costate = solve_costate(res.trajectory, params, spec, control=net)
    np.testing.assert_allclose(sol.p[:, 0] - 1.0, costate.p1, atol=1e-6)
    np.testing.assert_allclose(sol.p[:, 1], costate.p2, atol=1e-6)


def test_adjoint_norm_profile(tmp_path, params, x0):
    net = _perturbed(2)
    spec = CostSpec("c3", 0.05)
    sol, res = solve_adjoint_trajectory(net, spec, params, x0, 240)
    a = adjoint_norms(net, sol)
    assert a[0] == pytest.approx(np.linalg.norm(res.grad), rel=1e-12)
    assert a.shape == (241,)
    path = tmp_path / "adj.csv"
    write_adjoint_csv(path, net, sol, res.trajectory)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,S,I,R,u,p1,p2,p3,a_norm" and len(lines) == 242


def test_domain_error_and_clamp(params, x0):
    net = constant_net(1.5, 120.0)
    spec = CostSpec("c3", 0.1)
    with pytest.raises(CostDomainError) as info:
        grad_objective(net, spec, params, x0, 240)
    assert info.value.t == 0.0
    res = grad_objective(net, spec, params, x0, 240, clamp=True)
    assert np.all(res.trajectory.controls == CLAMP_MAX)
    assert np.all(res.grad == 0)  # clamped everywhere: no sensitivity


def test_divergence_surfaces(params, x0):
    with pytest.raises(IntegrationDivergedError):
        evaluate_objective(constant_net(-1000.0, 120.0), CostSpec("c4", 0.1), params, x0, 1200)
