"""Acceptance criteria, one test (and one summary line) per criterion.

Tolerances are pinned here.  Trained cells are computed once per session.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from sirnode.adjoint import ObjectiveMode, evaluate_objective, grad_objective
from sirnode.cost import CostKind, CostSpec, base_cost, calibrate_weight
from sirnode.experiment import ExperimentConfig, run_baseline, run_cell, run_sweep
from sirnode.network import init_xavier
from sirnode.theory import closed_form_check, simplex_check

N = 1e7

BASELINE_INFECTED = [200, 1626, 12542, 92164, 643531, 2358721, 2852657, 1722500, 834814,
                     373748, 164980, 71628]
BASELINE_CUMULATIVE = [200, 2339, 18723, 138618, 993903, 4179153, 7574716, 8800810, 9181982,
                       9316270, 9367572, 9388987]
PUBLISHED_WEIGHTS = {"c1": 0.830071, "c2": 0.672850, "c4": 1.424546}

TABLE_REL_TOL = 0.01
WEIGHT_TOL = 1e-3
GRAD_REL_TOL = 1e-4
GRAD_MAG_FLOOR = 1e-10
DU_TOL = 1e-6
IDENTITY_TOL = 1e-6
SIMPLEX_TOL = 1e-9
CLOSED_FORM_TOL = 1e-7
BAND = (0.05, 0.30)
NEAR_BASELINE = 0.15
SURGE_THRESHOLD = 71_628

TRAINED = [(0.1, k) for k in ("c1", "c2", "c3", "c4")] + \
          [(lam, k) for lam in (0.05, 0.01, 1e-7) for k in ("c1", "c2", "c3")]


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"#{n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def trained(config):
    cells = {}
    for lam, kind in TRAINED:
        cells[(lam, kind)] = run_cell(config, lam, kind)
    return cells


@pytest.fixture(scope="session")
def baseline(config):
    return run_baseline(config)


def test_1_baseline_tables(config):
    start = time.perf_counter()
    res = run_baseline(config)
    elapsed = time.perf_counter() - start
    worst, where = 0.0, None
    for name, got, ref in (("infected", res.infected, BASELINE_INFECTED),
                           ("cumulative", res.cumulative, BASELINE_CUMULATIVE)):
        for day, g, r in zip(res.days, got, ref):
            err = abs(g - r) / r
            if err > worst:
                worst, where = err, f"{name} day {day}: {g} vs {r}"
    ok = worst <= TABLE_REL_TOL and elapsed < 1.0
    record(1, ok, f"worst relative error {worst:.4f} ({where}), limit {TABLE_REL_TOL}; {elapsed:.2f}s")


def test_2_weight_calibration():
    start = time.perf_counter()
    got = {k: calibrate_weight(base_cost(k)) for k in PUBLISHED_WEIGHTS}
    elapsed = time.perf_counter() - start
    dev = max(abs(got[k] - v) for k, v in PUBLISHED_WEIGHTS.items())
    detail = ", ".join(f"{k}={got[k]:.6f}" for k in got)
    record(2, dev <= WEIGHT_TOL and elapsed < 1.0, f"{detail}; max deviation {dev:.1e}; {elapsed:.2f}s")


def _random_net(seed):
    net = init_xavier(seed, time_scale=120.0)
    rng = np.random.default_rng(1000 + seed)
    return net.with_theta(0.5 * net.theta + 0.05 * rng.standard_normal(net.size))


def _central_differences(net, spec, params, x0, mode, steps):
    # sixth-order central stencil; with eps=1e-3 truncation and rounding stay near 1e-12
    eps = 1e-3
    weights = {1: 45 / 60, 2: -9 / 60, 3: 1 / 60}
    g = np.empty(net.size)
    for j in range(net.size):
        e = np.zeros(net.size)
        e[j] = eps
        f = lambda k: evaluate_objective(net.with_theta(net.theta + k * e), spec, params, x0,
                                         steps, mode)[0]
        g[j] = sum(w * (f(k) - f(-k)) for k, w in weights.items()) / eps
    return g


def test_3_gradient_correctness(params, x0):
    start = time.perf_counter()
    combos = [(m, k) for m in ObjectiveMode for k in CostKind]
    worst, checked = 0.0, 0
    for i in range(20):
        mode, kind = combos[i % len(combos)]
        spec = CostSpec(kind, 0.05)
        net = _random_net(i)
        g = grad_objective(net, spec, params, x0, 240, mode).grad
        fd = _central_differences(net, spec, params, x0, mode, 240)
        big = np.abs(fd) > GRAD_MAG_FLOOR
        rel = np.abs(g[big] - fd[big]) / np.abs(fd[big])
        worst = max(worst, float(rel.max()))
        checked += int(big.sum())
    elapsed = time.perf_counter() - start
    record(3, worst <= GRAD_REL_TOL and elapsed < 120,
           f"max relative error {worst:.2e} over {checked} components; {elapsed:.0f}s")


@pytest.mark.parametrize("kind", ["c1", "c2", "c3"])
def test_4_training_efficacy(kind, trained, baseline, params, x0):
    cell = trained[(0.05, kind)]
    assert cell.ok, cell.error
    j0, _ = evaluate_objective(init_xavier(0, 120.0).with_theta(np.zeros(471)),
                               CostSpec(kind, 0.05), params, x0, 1200)
    share = cell.cumulative[-1] / baseline.cumulative[-1]
    max_u = float(cell.trajectory.controls.max())
    ok = cell.objective < j0 and BAND[0] <= share <= BAND[1] and max_u < 1
    record(4, ok, f"lambda=0.05 {kind}: J={cell.objective:.4f} vs J(0)={j0:.4f}, "
                  f"cumulative(110)={cell.cumulative[-1]} = {share:.1%} of baseline "
                  f"(band {BAND[0]:.0%}-{BAND[1]:.0%}), max u={max_u:.3f}")


@pytest.mark.parametrize("lam", [0.05, 0.01, 1e-7])
@pytest.mark.parametrize("kind", ["c1", "c2", "c3"])
def test_5_decline_structure(kind, lam, trained):
    cell = trained[(lam, kind)]
    assert cell.ok, cell.error
    th = cell.verification
    day = lambda t: "none" if t is None else f"{t:g}"
    ok = (th["tau"] is not None and th["tau"] < 120.0 and th["p1_negative"]
          and th["switching_negative"] and th["formula_negative"])
    record(5, bool(ok), f"lambda={lam:g} {kind}: tau={day(th['tau'])} (u stops rising at {day(th['decline_onset'])}, "
                        f"costate signs settle at {day(th['costate_onset'])}), p1<0={th['p1_negative']}, "
                        f"beta S I (p1-p2)<0={th['switching_negative']}, "
                        f"predicted u'<0={th['formula_negative']}")


def test_6_costate_identity(trained):
    worst = max(c.verification["identity_max_dev_stated"] for c in trained.values())
    derived = max(c.verification["identity_max_dev_derived"] for c in trained.values())
    record(6, worst <= IDENTITY_TOL,
           f"d/dt[SI(p1-p2)] = +gamma p1 S I: max deviation {worst:.2e} (limit {IDENTITY_TOL}); "
           f"with -gamma p1 S I: {derived:.2e}")


def test_6b_costate_identity_derived_sign(trained):
    derived = max(c.verification["identity_max_dev_derived"] for c in trained.values())
    assert derived <= IDENTITY_TOL


def test_7_conservation_and_closed_forms(trained, baseline, params):
    trajectories = [baseline.trajectory] + [c.trajectory for c in trained.values()]
    simplex = max(simplex_check(t).max_sum_deviation for t in trajectories)
    closed = 0.0
    for t in trajectories:
        cf = closed_form_check(t, params)
        closed = max(closed, cf.max_dev_s, cf.max_dev_r)
    record(7, simplex <= SIMPLEX_TOL and closed <= CLOSED_FORM_TOL,
           f"|s+i+r-1| max {simplex:.1e}; S and R integral forms max deviation {closed:.1e} "
           f"over {len(trajectories)} runs")


@pytest.mark.parametrize("kind", ["c1", "c2", "c3", "c4"])
def test_8_weak_penalty_near_no_control(kind, trained, baseline):
    cell = trained[(0.1, kind)]
    assert cell.ok, cell.error
    gap = abs(cell.cumulative[-1] - baseline.cumulative[-1]) / baseline.cumulative[-1]
    record(8, gap <= NEAR_BASELINE, f"lambda=0.1 {kind}: cumulative(110)={cell.cumulative[-1]}, "
                                    f"{gap:.1%} from baseline (limit {NEAR_BASELINE:.0%})")


@pytest.mark.parametrize("kind", ["c1", "c2", "c3"])
def test_9_late_surge(kind, trained, baseline):
    cell = trained[(0.05, kind)]
    assert cell.ok, cell.error
    record(9, cell.infected[-1] > SURGE_THRESHOLD,
           f"lambda=0.05 {kind}: I(110)={cell.infected[-1]} > {SURGE_THRESHOLD} "
           f"(computed baseline {baseline.infected[-1]})")


def _snapshot(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_10_determinism(tmp_path):
    # same config (output path included) both times; the second run overwrites the first
    cfg = ExperimentConfig(iterations=20, out=str(tmp_path / "sweep"))
    assert run_sweep(cfg).ok
    first = _snapshot(tmp_path / "sweep")
    assert run_sweep(cfg).ok
    second = _snapshot(tmp_path / "sweep")
    same = first == second
    record(10, same, f"16-cell sweep (K=20) run twice: {len(first)} files, byte-identical={same}")
