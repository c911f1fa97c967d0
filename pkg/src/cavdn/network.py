"""Minimal dense network with manual backprop and Adam, used for per-agent Q-functions.

Parameters live in one flat float64 vector per network; the per-layer weight
matrices and bias vectors are views into it. That keeps the optimizer to a
handful of whole-vector operations, which matters in the training hot loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    import numba

    @numba.njit(cache=True, fastmath=False)
    def _fused_adam(theta, grad, m, v, beta1, beta2, lr_corr1, inv_sqrt_corr2, eps):
        for i in range(theta.size):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * (g * g)
            theta[i] -= lr_corr1 * m[i] / (np.sqrt(v[i]) * inv_sqrt_corr2 + eps)

except ImportError:  # pragma: no cover - exercised only without numba
    _fused_adam = None


class NetworkError(ValueError):
    """Fatal configuration or shape error in network code."""


def _layout(layer_dims: tuple[int, ...]) -> list[tuple[int, int, int]]:
    """Offsets of each layer's (weight, bias) block in the flat vector."""
    spans = []
    offset = 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        w_size = fan_in * fan_out
        spans.append((offset, offset + w_size, offset + w_size + fan_out))
        offset += w_size + fan_out
    return spans


@dataclass
class Mlp:
    """Fully-connected net: ReLU on hidden layers, identity on the output."""

    layer_dims: tuple[int, ...]
    theta: np.ndarray
    weights: list[np.ndarray] = field(default_factory=list, repr=False)
    biases: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if len(self.layer_dims) < 2:
            raise NetworkError(f"need at least input and output dims, got {self.layer_dims}")
        expected = num_parameters(self.layer_dims)
        if self.theta.shape != (expected,):
            raise NetworkError(
                f"parameter vector has shape {self.theta.shape}, expected ({expected},)"
            )
        self.weights = []
        self.biases = []
        for (w0, w1, b1), fan_in, fan_out in zip(
            _layout(self.layer_dims), self.layer_dims[:-1], self.layer_dims[1:]
        ):
            self.weights.append(self.theta[w0:w1].reshape(fan_in, fan_out))
            self.biases.append(self.theta[w1:b1])

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]


def num_parameters(layer_dims: tuple[int, ...]) -> int:
    return sum((i + 1) * o for i, o in zip(layer_dims[:-1], layer_dims[1:]))


def create_mlp(layer_dims: tuple[int, ...], rng: np.random.Generator) -> Mlp:
    """New network with weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero biases."""
    theta = np.zeros(num_parameters(tuple(layer_dims)))
    net = Mlp(tuple(layer_dims), theta)
    for w in net.weights:
        bound = 1.0 / np.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return net


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Q-values for a single input vector or a (batch, input_dim) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise NetworkError(f"input has trailing dim {x.shape[-1]}, expected {net.input_dim}")
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            np.maximum(h, 0.0, out=h)
    return h


def _forward_cached(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer (input first, pre-ReLU clamped copies after)."""
    acts = [x]
    last = len(net.weights) - 1
    h = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    return acts


def backward(net: Mlp, x: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. theta, given d(loss)/d(output).

    Accepts a single vector or a batch; batch contributions are summed, so the
    caller controls the reduction through the scaling of ``output_grad``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    dout = np.atleast_2d(np.asarray(output_grad, dtype=np.float64))
    if x.shape[-1] != net.input_dim:
        raise NetworkError(f"input has trailing dim {x.shape[-1]}, expected {net.input_dim}")
    if dout.shape != (x.shape[0], net.output_dim):
        raise NetworkError(
            f"output_grad has shape {dout.shape}, expected {(x.shape[0], net.output_dim)}"
        )
    return _backward_from_cache(net, _forward_cached(net, x), dout)


def _backward_from_cache(net: Mlp, acts: list[np.ndarray], dout: np.ndarray) -> np.ndarray:
    """Backprop given activations from ``_forward_cached`` on the same input."""
    grad = np.empty_like(net.theta)
    spans = _layout(net.layer_dims)
    delta = dout
    for i in range(len(net.weights) - 1, -1, -1):
        w0, w1, b1 = spans[i]
        a_in = acts[i]
        np.matmul(a_in.T, delta, out=grad[w0:w1].reshape(a_in.shape[1], -1))
        grad[w1:b1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i].T
            # hidden activations were ReLU-clamped in place; zero grads where inactive
            delta[acts[i] <= 0.0] = 0.0
    return grad


@dataclass
class AdamState:
    """Adam accumulators for one network's flat parameter vector."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stability: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    _scratch: np.ndarray | None = None

    def _ensure(self, size: int) -> None:
        if self.m is None:
            self.m = np.zeros(size)
            self.v = np.zeros(size)
            self._scratch = np.empty(size)
        elif self.m.shape != (size,):
            raise NetworkError(f"optimizer state sized {self.m.shape} applied to {size} params")


def adam_step(net: Mlp, grad: np.ndarray, opt: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    if grad.shape != net.theta.shape:
        raise NetworkError(f"gradient shape {grad.shape} does not match {net.theta.shape}")
    # a single reduction is finite iff every entry is (inf - inf still yields nan)
    if not np.isfinite(np.sum(grad)):
        for i, (w0, _, b1) in enumerate(_layout(net.layer_dims)):
            if not np.all(np.isfinite(grad[w0:b1])):
                raise NetworkError(f"non-finite gradient in layer {i}")
        raise NetworkError("non-finite gradient")
    opt._ensure(net.theta.size)
    opt.step += 1
    # theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps), with the
    # bias corrections folded into scalars so the update stays allocation-free
    lr_corr1 = opt.learning_rate / (1.0 - opt.beta1**opt.step)
    inv_sqrt_corr2 = 1.0 / np.sqrt(1.0 - opt.beta2**opt.step)
    if _fused_adam is not None:
        _fused_adam(
            net.theta,
            np.ascontiguousarray(grad),
            opt.m,
            opt.v,
            opt.beta1,
            opt.beta2,
            lr_corr1,
            inv_sqrt_corr2,
            opt.epsilon_stability,
        )
        return
    m, v, scratch = opt.m, opt.v, opt._scratch
    m *= opt.beta1
    np.multiply(grad, 1.0 - opt.beta1, out=scratch)
    m += scratch
    v *= opt.beta2
    np.multiply(grad, grad, out=scratch)
    scratch *= 1.0 - opt.beta2
    v += scratch
    np.sqrt(v, out=scratch)
    scratch *= inv_sqrt_corr2
    scratch += opt.epsilon_stability
    np.divide(m, scratch, out=scratch)
    scratch *= lr_corr1
    net.theta -= scratch


def copy_parameters(src: Mlp, dst: Mlp) -> None:
    """Copy src parameters into dst; the two stay independent afterwards."""
    if src.layer_dims != dst.layer_dims:
        raise NetworkError(f"architecture mismatch: {src.layer_dims} vs {dst.layer_dims}")
    dst.theta[...] = src.theta


SNAPSHOT_FORMAT_VERSION = 1


def save_params(net: Mlp, path) -> None:
    """Versioned binary snapshot of the parameters."""
    np.savez(
        path,
        format_version=np.int64(SNAPSHOT_FORMAT_VERSION),
        layer_dims=np.asarray(net.layer_dims, dtype=np.int64),
        theta=net.theta,
    )


def load_params(path) -> Mlp:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != SNAPSHOT_FORMAT_VERSION:
            raise NetworkError(f"snapshot format version {version} not supported")
        dims = tuple(int(d) for d in data["layer_dims"])
        theta = np.array(data["theta"], dtype=np.float64)
    return Mlp(dims, theta)
