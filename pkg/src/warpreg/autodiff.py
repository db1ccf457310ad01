"""Dense tanh network with hand-rolled reverse- and forward-mode derivatives.

Everything runs in float64 on plain numpy arrays. Three derivative paths:

* ``backward``       reverse mode, d(loss)/d(parameters) from output cotangents
* ``input_jacobian`` forward mode, d(outputs)/d(inputs) along seed directions
* ``backward_dual``  reverse over forward, d(loss)/d(parameters) when the loss
                     consumes the forward-mode directional derivatives
                     (needed to train on functions of the displacement gradient)

The output layer is always linear; hidden layers use tanh.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionError


@dataclass
class DenseNetwork:
    layer_sizes: list[int]
    weights: list[np.ndarray]       # weights[k] has shape (out_k, in_k)
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_width(self) -> int:
        return self.layer_sizes[-1]

    def validate(self):
        if self.hidden_activation != "tanh":
            raise ValueError(f"unsupported activation {self.hidden_activation!r}")
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise DimensionError("layer count mismatch")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[k + 1], self.layer_sizes[k]):
                raise DimensionError(f"weights[{k}] has shape {w.shape}, "
                                     f"expected {(self.layer_sizes[k + 1], self.layer_sizes[k])}")
            if b.shape != (self.layer_sizes[k + 1],):
                raise DimensionError(f"biases[{k}] has shape {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameter entries")


@dataclass
class ParamGradient:
    """d(loss)/d(parameter), shape-congruent with its network."""
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def add_scaled(self, other: "ParamGradient", scale: float = 1.0):
        for a, b in zip(self.weights, other.weights):
            a += scale * b
        for a, b in zip(self.biases, other.biases):
            a += scale * b
        return self

    def flat(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class DualBatch:
    """Outputs plus their directional derivatives along seed directions."""
    values: np.ndarray                  # (N, out)
    directional_derivatives: np.ndarray  # (N, n_seeds, out)
    cache: list = field(default_factory=list, repr=False)


def zero_gradient(net: DenseNetwork) -> ParamGradient:
    return ParamGradient([np.zeros_like(w) for w in net.weights],
                         [np.zeros_like(b) for b in net.biases])


def net_params(net: DenseNetwork) -> list[np.ndarray]:
    """Trainable arrays in the canonical order matching ParamGradient.flat()."""
    out = []
    for w, b in zip(net.weights, net.biases):
        out.append(w)
        out.append(b)
    return out


def init_xavier(layer_sizes, rng_seed: int) -> DenseNetwork:
    """Glorot-uniform weights, zero biases, reproducible from the seed."""
    if len(layer_sizes) < 3:
        raise ValueError("need at least one hidden layer")
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    net = DenseNetwork(list(layer_sizes), weights, biases)
    net.validate()
    return net


def _check_inputs(net: DenseNetwork, inputs: np.ndarray) -> np.ndarray:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != net.input_width:
        raise DimensionError(f"input width {inputs.shape[1]}, "
                             f"network expects {net.input_width}")
    return inputs


def forward(net: DenseNetwork, inputs: np.ndarray) -> np.ndarray:
    """Plain forward pass, (N, in) -> (N, out)."""
    a = _check_inputs(net, inputs)
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if k != last:
            a = np.tanh(a)
    return a


def forward_cached(net: DenseNetwork, inputs: np.ndarray):
    """Forward pass recording per-layer activations for ``backward``.

    The cache holds the input to each layer (cache[0] is the batch input,
    cache[k] the tanh output feeding layer k); it is dropped by the caller
    after the matching backward, there is no persistent tape.
    """
    a = _check_inputs(net, inputs)
    cache = [a]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if k != last:
            a = np.tanh(a)
            cache.append(a)
    return a, cache


def backward(net: DenseNetwork, cache: list, output_cotangents: np.ndarray) -> ParamGradient:
    """Reverse accumulation of d(loss)/d(parameters).

    ``cache`` must come from ``forward_cached`` on the same batch;
    ``output_cotangents`` holds d(loss)/d(output), shape (N, out).
    """
    if not cache or len(cache) != len(net.weights):
        raise ValueError("activation cache missing or from a different network")
    g = np.asarray(output_cotangents, dtype=np.float64)
    if g.shape != (cache[0].shape[0], net.output_width):
        raise DimensionError("cotangent shape mismatch")
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    for k in range(len(net.weights) - 1, -1, -1):
        a_prev = cache[k]
        grads_w[k] = g.T @ a_prev
        grads_b[k] = g.sum(axis=0)
        if k > 0:
            g = (g @ net.weights[k]) * (1.0 - a_prev * a_prev)
    return ParamGradient(grads_w, grads_b)


class Workspace:
    """Reusable buffers for repeated forward/backward passes on one batch shape.

    Training evaluates the same network on the same batch size tens of
    thousands of times; reusing these buffers keeps the hot loop free of
    multi-megabyte allocations, which dominate the cost of the plain API
    on large pixel batches.
    """

    def __init__(self, net: DenseNetwork, n: int):
        widths = net.layer_sizes[1:]
        self.n = n
        self.act = [np.empty((n, w)) for w in widths]
        self.cot = [np.empty((n, w)) for w in widths]
        self.pre = [np.empty((n, w)) for w in widths[:-1]]
        self.grad = zero_gradient(net)


def forward_ws(net: DenseNetwork, inputs: np.ndarray, ws: Workspace) -> np.ndarray:
    """Forward pass into workspace buffers; returns a view of the outputs."""
    a = inputs
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        np.matmul(a, w.T, out=ws.act[k])
        ws.act[k] += b
        if k != last:
            np.tanh(ws.act[k], out=ws.act[k])
            a = ws.act[k]
    return ws.act[last]


def backward_ws(net: DenseNetwork, inputs: np.ndarray, ws: Workspace,
                output_cotangents: np.ndarray) -> ParamGradient:
    """Reverse pass matching ``forward_ws``; overwrites and returns ws.grad."""
    g = output_cotangents
    grads = ws.grad
    last = len(net.weights) - 1
    g.sum(axis=0, out=grads.biases[last])
    for k in range(last, -1, -1):
        a_prev = ws.act[k - 1] if k > 0 else inputs
        np.matmul(g.T, a_prev, out=grads.weights[k])
        if k > 0:
            np.matmul(g, net.weights[k], out=ws.pre[k - 1])
            _kernels.backward_gate(ws.pre[k - 1], a_prev, ws.cot[k - 1],
                                   grads.biases[k - 1])
            g = ws.cot[k - 1]
    return grads


def _seed_tangents(net: DenseNetwork, n_points: int, seeds: np.ndarray) -> np.ndarray:
    seeds = np.asarray(seeds, dtype=np.float64)
    if seeds.ndim == 2:
        seeds = np.broadcast_to(seeds, (n_points,) + seeds.shape)
    if seeds.shape[0] != n_points or seeds.shape[2] != net.input_width:
        raise DimensionError("seed directions must be (n_seeds, in) or (N, n_seeds, in)")
    return np.ascontiguousarray(seeds)


def forward_with_jacobian(net: DenseNetwork, inputs: np.ndarray, seeds: np.ndarray) -> DualBatch:
    """Forward pass carrying directional derivatives of outputs w.r.t. inputs.

    ``seeds`` are input-space directions, either shared (n_seeds, in) or
    per point (N, n_seeds, in). Cost is n_seeds extra linear passes; the
    cache retains activations and pre-activation tangents for
    ``backward_dual``.
    """
    a = _check_inputs(net, inputs)
    adot = _seed_tangents(net, a.shape[0], seeds)
    cache = []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        a_prev, adot_prev = a, adot
        zdot = adot @ w.T
        a = a @ w.T + b
        if k != last:
            a = np.tanh(a)
            sp = 1.0 - a * a
            adot = sp[:, None, :] * zdot
            cache.append((a_prev, adot_prev, a, zdot))
        else:
            adot = zdot
            cache.append((a_prev, adot_prev, None, None))
    return DualBatch(values=a, directional_derivatives=adot, cache=cache)


def input_jacobian(net: DenseNetwork, inputs: np.ndarray, seeds: np.ndarray) -> DualBatch:
    """Exact d(output)/d(input) along the given seed directions."""
    seeds = np.asarray(seeds, dtype=np.float64)
    if seeds.shape[-1] > net.input_width:
        raise DimensionError("seed longer than input width")
    if seeds.shape[-1] < net.input_width:
        pad = net.input_width - seeds.shape[-1]
        widths = [(0, 0)] * (seeds.ndim - 1) + [(0, pad)]
        seeds = np.pad(seeds, widths)
    dual = forward_with_jacobian(net, inputs, seeds)
    dual.cache = []
    return dual


def backward_dual(net: DenseNetwork, dual: DualBatch,
                  value_cotangents, tangent_cotangents) -> ParamGradient:
    """Reverse pass over ``forward_with_jacobian``.

    Propagates cotangents of both the outputs (N, out) and their directional
    derivatives (N, n_seeds, out) back to the parameters. Either cotangent
    may be None. This is what makes losses built on the displacement
    gradient trainable.
    """
    cache = dual.cache
    if not cache:
        raise ValueError("DualBatch cache missing (was it produced by forward_with_jacobian?)")
    n = dual.values.shape[0]
    n_seeds = dual.directional_derivatives.shape[1]
    if value_cotangents is None:
        value_cotangents = np.zeros((n, net.output_width))
    if tangent_cotangents is None:
        tangent_cotangents = np.zeros((n, n_seeds, net.output_width))
    g = np.asarray(value_cotangents, dtype=np.float64)
    gd = np.asarray(tangent_cotangents, dtype=np.float64)
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    for k in range(len(net.weights) - 1, -1, -1):
        a_prev, adot_prev, a_out, zdot = cache[k]
        grads_w[k] = g.T @ a_prev + np.einsum("nso,nsi->oi", gd, adot_prev)
        grads_b[k] = g.sum(axis=0)
        if k == 0:
            break
        ga = g @ net.weights[k]
        gad = gd @ net.weights[k]
        # through a = tanh(z), adot = (1 - a^2) * zdot of the layer below:
        #   dz      = (1 - a^2) * da - 2 a (1 - a^2) * sum_s(dadot_s * zdot_s)
        #   dzdot_s = (1 - a^2) * dadot_s
        a_below = cache[k - 1][2]
        zdot_below = cache[k - 1][3]
        sp = 1.0 - a_below * a_below
        g = sp * (ga - 2.0 * a_below * np.einsum("nsi,nsi->ni", gad, zdot_below))
        gd = sp[:, None, :] * gad
    return ParamGradient(grads_w, grads_b)
