"""Fully connected tanh network ``u_theta(t)`` with hand-written derivatives.

The default architecture maps a scalar time through five tanh layers of
width 10 to a scalar output::

    z0 = t / time_scale
    z_{l+1} = tanh(W_l z_l + b_l)        l = 0, ..., 4
    u = w5 . z5 + b5

Parameters live in one flat vector ``theta`` ordered as all weight matrices
from the output layer down to the input layer, followed by all biases in the
same order: ``(w5, W4, W3, W2, W1, W0, b5, b4, b3, b2, b1, b0)``. Matrices
are flattened row-major with shape ``(fan_out, fan_in)``.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_LAYERS: Tuple[int, ...] = (1, 10, 10, 10, 10, 10, 1)

THETA_FORMAT = "sirnode-theta/1"


def param_count(layers: Sequence[int] = DEFAULT_LAYERS) -> int:
    """Number of weights and biases for the given layer widths."""
    layers = tuple(int(n) for n in layers)
    if len(layers) < 2 or min(layers) < 1:
        raise InvalidArgumentError(f"invalid layer sizes {layers!r}")
    return sum(n_in * n_out + n_out for n_in, n_out in zip(layers[:-1], layers[1:]))


def _slices(layers):
    """Offsets of each (weight, bias) pair in the flat layout, input layer first."""
    shapes = [(n_out, n_in) for n_in, n_out in zip(layers[:-1], layers[1:])]
    weight_slices = [None] * len(shapes)
    bias_slices = [None] * len(shapes)
    offset = 0
    for k in reversed(range(len(shapes))):
        size = shapes[k][0] * shapes[k][1]
        weight_slices[k] = slice(offset, offset + size)
        offset += size
    for k in reversed(range(len(shapes))):
        bias_slices[k] = slice(offset, offset + shapes[k][0])
        offset += shapes[k][0]
    return shapes, weight_slices, bias_slices


@dataclass(frozen=True)
class ControlNet:
    theta: np.ndarray
    time_scale: float = 1.0
    layers: Tuple[int, ...] = DEFAULT_LAYERS
    _layout: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(int(n) for n in self.layers)
        if layers[0] != 1 or layers[-1] != 1:
            raise InvalidArgumentError("control network must map a scalar to a scalar")
        theta = np.array(self.theta, dtype=float).ravel()
        if theta.size != param_count(layers):
            raise InvalidArgumentError(
                f"theta has {theta.size} entries, architecture needs {param_count(layers)}")
        if not np.all(np.isfinite(theta)):
            raise InvalidArgumentError("theta must be finite")
        if not (np.isfinite(self.time_scale) and self.time_scale > 0):
            raise InvalidArgumentError("time_scale must be positive")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "time_scale", float(self.time_scale))
        object.__setattr__(self, "_layout", _slices(layers))

    @property
    def size(self) -> int:
        return self.theta.size

    def with_theta(self, theta) -> "ControlNet":
        return ControlNet(theta, self.time_scale, self.layers)

    def unflatten(self):
        """Lists ``weights, biases`` indexed from the input layer."""
        shapes, ws, bs = self._layout
        weights = [self.theta[s].reshape(shape) for s, shape in zip(ws, shapes)]
        biases = [self.theta[s] for s in bs]
        return weights, biases

    def _activations(self, t):
        weights, biases = self.unflatten()
        z = np.atleast_1d(np.asarray(t, dtype=float))[None, :] / self.time_scale
        hidden = [z]
        for W, b in zip(weights[:-1], biases[:-1]):
            z = np.tanh(W @ z + b[:, None])
            hidden.append(z)
        return weights, biases, hidden

    def __call__(self, t):
        """Control value(s) at time(s) ``t``; scalar in, scalar out."""
        weights, biases, hidden = self._activations(t)
        u = (weights[-1] @ hidden[-1] + biases[-1][:, None])[0]
        return float(u[0]) if np.ndim(t) == 0 else u

    def vjp(self, t, cotangent) -> np.ndarray:
        """``sum_k cotangent[k] * du(t[k])/dtheta`` in the flat layout."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c = np.broadcast_to(np.asarray(cotangent, dtype=float), t.shape)[None, :]
        weights, _, hidden = self._activations(t)
        shapes, ws, bs = self._layout
        grad = np.empty_like(self.theta)
        delta = c
        for k in reversed(range(len(weights))):
            grad[ws[k]] = (delta @ hidden[k].T).ravel()
            grad[bs[k]] = delta.sum(axis=1)
            if k:
                delta = (weights[k].T @ delta) * (1.0 - hidden[k] ** 2)
        return grad

    def per_sample_grad(self, t) -> np.ndarray:
        """``du(t[k])/dtheta`` for each time, shape ``(len(t), size)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        weights, _, hidden = self._activations(t)
        shapes, ws, bs = self._layout
        out = np.empty((t.size, self.size))
        delta = np.ones((1, t.size))
        for k in reversed(range(len(weights))):
            out[:, ws[k]] = np.einsum("in,jn->nij", delta, hidden[k]).reshape(t.size, -1)
            out[:, bs[k]] = delta.T
            if k:
                delta = (weights[k].T @ delta) * (1.0 - hidden[k] ** 2)
        return out

    def grad_theta(self, t: float) -> np.ndarray:
        """``du/dtheta`` at a single time."""
        return self.vjp(np.array([t]), np.ones(1))

    def du_dt(self, t):
        """Time derivative of the control by forward-mode chain rule."""
        weights, _, hidden = self._activations(t)
        tangent = np.full_like(hidden[0], 1.0 / self.time_scale)
        for W, z in zip(weights[:-1], hidden[1:]):
            tangent = (1.0 - z ** 2) * (W @ tangent)
        du = (weights[-1] @ tangent)[0]
        return float(du[0]) if np.ndim(t) == 0 else du


def init_xavier(seed: int, time_scale: float = 1.0, layers: Sequence[int] = DEFAULT_LAYERS) -> ControlNet:
    """Uniform Xavier weights on ``+-sqrt(6 / (fan_in + fan_out))``, zero biases.

    Matrices are drawn from the input layer upward.
    """
    layers = tuple(layers)
    rng = np.random.default_rng(seed)
    shapes, ws, _ = _slices(layers)
    theta = np.zeros(param_count(layers))
    for (fan_out, fan_in), s in zip(shapes, ws):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        theta[s] = rng.uniform(-bound, bound, size=fan_out * fan_in)
    return ControlNet(theta, time_scale, layers)


def constant_net(value: float, time_scale: float = 1.0, layers: Sequence[int] = DEFAULT_LAYERS) -> ControlNet:
    """Network whose only nonzero parameter is the output bias."""
    theta = np.zeros(param_count(layers))
    _, _, bs = _slices(tuple(layers))
    theta[bs[-1]] = value
    return ControlNet(theta, time_scale, tuple(layers))


def save_theta(path, net: ControlNet, seed: Optional[int] = None) -> None:
    """Write a text header followed by little-endian float64 parameters.

    The header is ``key=value`` lines closed by an ``end_header`` line.
    """
    header = [
        f"format={THETA_FORMAT}",
        "layers=" + ",".join(str(n) for n in net.layers),
        f"count={net.size}",
        f"seed={'' if seed is None else int(seed)}",
        f"time_scale={net.time_scale!r}",
        "end_header",
    ]
    payload = ("\n".join(header) + "\n").encode("ascii") + net.theta.astype("<f8").tobytes()
    atomic_write_bytes(path, payload)


def load_theta(path) -> Tuple[ControlNet, dict]:
    data = Path(path).read_bytes()
    marker = b"end_header\n"
    end = data.find(marker)
    if end < 0:
        raise InvalidArgumentError(f"{path}: missing theta header")
    header = {}
    for line in data[:end].decode("ascii").splitlines():
        key, _, value = line.partition("=")
        header[key] = value
    if header.get("format") != THETA_FORMAT:
        raise InvalidArgumentError(f"{path}: unsupported format {header.get('format')!r}")
    layers = tuple(int(n) for n in header["layers"].split(","))
    theta = np.frombuffer(data[end + len(marker):], dtype="<f8").astype(float)
    if theta.size != int(header["count"]):
        raise InvalidArgumentError(f"{path}: expected {header['count']} values, found {theta.size}")
    net = ControlNet(theta, float(header["time_scale"]), layers)
    header["seed"] = int(header["seed"]) if header.get("seed") else None
    return net, header


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
