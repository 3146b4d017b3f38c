import numpy as np
import pytest

from sirnode.adjoint import evaluate_objective
from sirnode.cost import CostSpec
from sirnode.errors import InvalidArgumentError, NumericalError, TrainingFailedError
from sirnode.network import constant_net, init_xavier, load_theta
from sirnode.trainer import TrainConfig, adam_step, train

SMALL = dict(steps=120, iterations=40, learning_rate=1e-2)


def test_adam_first_step_is_sign_of_gradient():
    cfg = TrainConfig(learning_rate=0.1)
    g = np.array([3.0, -0.5, 0.0])
    theta, m, v = adam_step(np.zeros(3), g, np.zeros(3), np.zeros(3), 1, cfg)
    np.testing.assert_allclose(theta, [-0.1, 0.1, 0.0], atol=1e-8)
    np.testing.assert_allclose(m, 0.1 * g)
    np.testing.assert_allclose(v, 0.001 * g * g)


def test_adam_rejects_bad_input():
    cfg = TrainConfig()
    with pytest.raises(NumericalError):
        adam_step(np.zeros(1), np.array([np.nan]), np.zeros(1), np.zeros(1), 1, cfg)
    with pytest.raises(InvalidArgumentError):
        adam_step(np.zeros(1), np.ones(1), np.zeros(1), np.zeros(1), 0, cfg)
    with pytest.raises(InvalidArgumentError):
        TrainConfig(learning_rate=0)


def test_training_decreases_objective_and_is_deterministic(params, x0):
    spec = CostSpec("c3", 0.05)
    cfg = TrainConfig(**SMALL)
    a = train(init_xavier(0, 120.0), spec, params, x0, config=cfg)
    b = train(init_xavier(0, 120.0), spec, params, x0, config=cfg)
    assert a.best_objective < a.initial_objective
    assert len(a.history) == 40
    assert np.array_equal(a.theta, b.theta) and a.history == b.history
    J, _ = evaluate_objective(init_xavier(0, 120.0).with_theta(a.best_theta), spec, params, x0, 120)
    assert J == a.best_objective
    assert "wall_time" not in a.to_dict() and "wall_time" in a.to_dict(include_timing=True)


def test_backtracking_keeps_iterates_admissible(params, x0):
    # start near the barrier with a huge step so that plain Adam would cross u = 1
    spec = CostSpec("c3", 1e-9)
    cfg = TrainConfig(steps=120, iterations=15, learning_rate=5.0)
    rep = train(constant_net(0.5, 120.0), spec, params, x0, config=cfg)
    assert rep.backtracks > 0
    assert np.isfinite(rep.objective) and rep.best_objective < rep.initial_objective


def test_inadmissible_start_fails(params, x0):
    with pytest.raises(TrainingFailedError) as info:
        train(constant_net(1.2, 120.0), CostSpec("c2", 0.1), params, x0, config=TrainConfig(**SMALL))
    assert info.value.iteration == 0


def test_checkpoints_and_early_stop(tmp_path, params, x0):
    cfg = TrainConfig(steps=60, iterations=30, learning_rate=1e-3, checkpoint_every=10,
                      checkpoint_dir=str(tmp_path), early_stop_tol=1.0, early_stop_window=20)
    rep = train(init_xavier(1, 120.0), CostSpec("c4", 0.1), params, x0, config=cfg)
    assert len(rep.history) == 20
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["theta_00010.bin", "theta_00020.bin"]
    net, header = load_theta(tmp_path / "theta_00020.bin")
    assert np.array_equal(net.theta, rep.theta)
