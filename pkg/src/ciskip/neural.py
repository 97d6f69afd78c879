"""Small fully connected networks with hand-written backprop and Adam.

Everything runs in float64. Inputs may be a single vector or a batch
(rows are samples).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "linear", "logistic")


class NetworkError(ValueError):
    pass


@dataclass
class NetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_act: str = "relu"
    output_act: str = "linear"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise NetworkError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.shape[0]:
                raise NetworkError(f"layer {i}: weight rows {w.shape[0]} != bias size {b.shape[0]}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise NetworkError(f"layer {i}: input width {w.shape[1]} does not chain")
        for act in (self.hidden_act, self.output_act):
            if act not in ACTIVATIONS:
                raise NetworkError(f"unknown activation {act!r}")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                             self.hidden_act, self.output_act)

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def to_json(self) -> dict:
        return {"hidden_act": self.hidden_act, "output_act": self.output_act,
                "weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_json(cls, d) -> "NetworkParams":
        return cls([np.array(w, dtype=np.float64) for w in d["weights"]],
                   [np.array(b, dtype=np.float64) for b in d["biases"]],
                   d["hidden_act"], d["output_act"])


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


@dataclass
class Cache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    out: np.ndarray
    single: bool


def init_network(layer_sizes, hidden_act="relu", output_act="linear", seed=0) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise NetworkError("need at least input and output sizes")
    if min(sizes) < 1:
        raise NetworkError(f"zero-width layer in {sizes}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases, hidden_act, output_act)


def _activate(z, act):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "logistic":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _activate_grad(z, a, act):
    if act == "relu":
        return (z > 0).astype(np.float64)
    if act == "logistic":
        return a * (1.0 - a)
    return np.ones_like(z)


def forward(net: NetworkParams, x) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.sizes[0]:
        raise NetworkError(f"input width {h.shape[1]} != network input {net.sizes[0]}")
    inputs, pre = [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = _activate(z, net.output_act if i == last else net.hidden_act)
    cache = Cache(inputs, pre, h, single)
    return (h[0] if single else h), cache


def backward(net: NetworkParams, cache: Cache, output_gradient) -> Gradients:
    """Gradients of ``sum(output * output_gradient)`` w.r.t. parameters and input."""
    g = np.asarray(output_gradient, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    if g.shape != cache.out.shape or len(cache.pre) != len(net.weights):
        raise NetworkError("output gradient / cache do not match this network")
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    last = len(net.weights) - 1
    h = cache.out
    for i in range(last, -1, -1):
        z = cache.pre[i]
        act = net.output_act if i == last else net.hidden_act
        a = h if i == last else _activate(z, act)
        dz = g * _activate_grad(z, a, act)
        gw[i] = dz.T @ cache.inputs[i]
        gb[i] = dz.sum(axis=0)
        g = dz @ net.weights[i]
    return Gradients(gw, gb, g[0] if cache.single else g)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, net: NetworkParams) -> "AdamState":
        return cls([np.zeros_like(p) for p in net.params()], [np.zeros_like(p) for p in net.params()])

    def to_json(self) -> dict:
        return {"t": self.t, "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}

    @classmethod
    def from_json(cls, d) -> "AdamState":
        return cls([np.array(a) for a in d["m"]], [np.array(a) for a in d["v"]], int(d["t"]))


def adam_step(net: NetworkParams, grads: Gradients, state: AdamState, lr=1e-3,
              beta1=0.9, beta2=0.999, eps=1e-8) -> tuple[NetworkParams, AdamState]:
    params, gparams = net.params(), grads.params()
    if len(params) != len(gparams) or any(p.shape != g.shape for p, g in zip(params, gparams)):
        raise NetworkError("gradient shapes do not match the network")
    t = state.t + 1
    new_params, ms, vs = [], [], []
    for p, g, m, v in zip(params, gparams, state.m, state.v):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        ms.append(m)
        vs.append(v)
    out = NetworkParams(new_params[0::2], new_params[1::2], net.hidden_act, net.output_act)
    return out, AdamState(ms, vs, t)
