import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sirnode.errors import InvalidArgumentError
from sirnode.network import (DEFAULT_LAYERS, ControlNet, constant_net, init_xavier, load_theta,
                             param_count, save_theta)


def test_param_count():
    assert param_count(DEFAULT_LAYERS) == 471
    assert param_count((1, 3, 1)) == 3 + 3 + 3 + 1


def test_xavier_bounds_and_zero_biases():
    net = init_xavier(0)
    weights, biases = net.unflatten()
    for W in weights:
        fan_out, fan_in = W.shape
        assert np.all(np.abs(W) <= np.sqrt(6.0 / (fan_in + fan_out)))
    assert all(np.all(b == 0) for b in biases)
    assert np.array_equal(init_xavier(0).theta, net.theta)
    assert not np.array_equal(init_xavier(1).theta, net.theta)


def test_unflatten_layout_output_layer_first():
    theta = np.arange(param_count((1, 2, 1)), dtype=float)
    net = ControlNet(theta, layers=(1, 2, 1))
    weights, biases = net.unflatten()
    # output weights, then input weights, then output bias, then hidden bias
    np.testing.assert_array_equal(weights[-1].ravel(), [0, 1])
    np.testing.assert_array_equal(weights[0].ravel(), [2, 3])
    np.testing.assert_array_equal(biases[-1], [4])
    np.testing.assert_array_equal(biases[0], [5, 6])


def test_constant_net():
    net = constant_net(0.25, time_scale=120.0)
    assert net(0.0) == 0.25 and np.all(net(np.linspace(0, 120, 7)) == 0.25)
    assert net.du_dt(3.0) == 0.0


def test_scalar_and_vector_evaluation_agree():
    net = init_xavier(3, time_scale=120.0)
    ts = np.linspace(0, 120, 9)
    np.testing.assert_allclose(net(ts), [net(float(t)) for t in ts], rtol=0, atol=1e-15)


def test_bad_theta_size():
    with pytest.raises(InvalidArgumentError):
        ControlNet(np.zeros(10))


def test_grad_theta_matches_finite_differences():
    net = init_xavier(5, time_scale=120.0)
    rng = np.random.default_rng(0)
    net = net.with_theta(net.theta + 0.1 * rng.standard_normal(net.size))
    t, eps = 37.0, 1e-6
    g = net.grad_theta(t)
    for j in rng.choice(net.size, 25, replace=False):
        e = np.zeros(net.size)
        e[j] = eps
        fd = (net.with_theta(net.theta + e)(t) - net.with_theta(net.theta - e)(t)) / (2 * eps)
        assert g[j] == pytest.approx(fd, abs=1e-9)


def test_vjp_equals_weighted_per_sample_sum():
    net = init_xavier(2, time_scale=10.0)
    ts = np.linspace(0, 10, 11)
    w = np.cos(ts)
    np.testing.assert_allclose(net.vjp(ts, w), w @ net.per_sample_grad(ts), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0, 120))
def test_du_dt_matches_central_difference(seed, t):
    net = init_xavier(seed, time_scale=120.0)
    h = 1e-4
    fd = (net(t + h) - net(t - h)) / (2 * h)
    assert net.du_dt(t) == pytest.approx(fd, abs=1e-9)


def test_save_load_round_trip(tmp_path):
    net = init_xavier(7, time_scale=120.0)
    path = tmp_path / "sub" / "theta.bin"
    save_theta(path, net, seed=7)
    loaded, header = load_theta(path)
    assert np.array_equal(loaded.theta, net.theta)
    assert loaded.layers == net.layers and loaded.time_scale == 120.0
    assert header["seed"] == 7
    assert not list(path.parent.glob("*.tmp*"))


def test_load_rejects_truncated(tmp_path):
    path = tmp_path / "theta.bin"
    save_theta(path, init_xavier(0))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InvalidArgumentError):
        load_theta(path)
