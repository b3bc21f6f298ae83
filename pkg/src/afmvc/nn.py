"""Dense feedforward networks with hand-written backprop, Adam, and gradient reversal.

Everything runs in float64. Weights are stored ``out x in`` so a layer maps a
row-batch ``a`` to ``a @ W.T + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BoundsError, ContractError, NonFiniteError, StructuralError

ACTIVATIONS = ("relu", "sigmoid", "identity", "softmax")
ROLES = ("encoder", "decoder", "discriminator")

CHECKPOINT_MAGIC = "AFMVC-CHECKPOINT"
CHECKPOINT_VERSION = 1


def sigmoid(a):
    # split by sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "softmax":
        return softmax(z)
    return z


def _activation_backward(name, z, a, grad):
    if name == "relu":
        return grad * (z > 0)
    if name == "sigmoid":
        return grad * a * (1.0 - a)
    if name == "softmax":
        return a * (grad - np.sum(grad * a, axis=1, keepdims=True))
    return grad


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


class DenseNetwork:
    def __init__(self, layers: Sequence[Layer], role: str = "encoder"):
        if role not in ROLES:
            raise StructuralError(f"unknown role {role!r}")
        if not layers:
            raise StructuralError("a network needs at least one layer")
        for i, layer in enumerate(layers):
            if layer.activation not in ACTIVATIONS:
                raise StructuralError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise StructuralError(f"layer {i}: bias shape {layer.bias.shape} does not match {layer.out_dim} outputs")
            if i > 0 and layer.in_dim != layers[i - 1].out_dim:
                raise StructuralError(
                    f"layer {i} expects {layer.in_dim} inputs but layer {i - 1} emits {layers[i - 1].out_dim}"
                )
            if layer.activation == "softmax" and (role != "discriminator" or i != len(layers) - 1):
                raise StructuralError("softmax is only allowed as the last activation of a discriminator")
        self.layers = list(layers)
        self.role = role
        self.generation = 0

    @classmethod
    def build(cls, widths: Sequence[int], role: str, rng: np.random.Generator, hidden: str = "relu", final: str | None = None):
        """Glorot-uniform weights, zero biases. `final` defaults to softmax for a discriminator, identity otherwise."""
        if len(widths) < 2:
            raise StructuralError("widths must list at least input and output sizes")
        if final is None:
            final = "softmax" if role == "discriminator" else "identity"
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            act = final if i == len(widths) - 2 else hidden
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers, role)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @property
    def widths(self):
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "DenseNetwork":
        layers = [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return DenseNetwork(layers, self.role)

    def apply_adam(self, grads, state: "AdamState", term: str = "") -> None:
        adam_step(self.parameters(), grads, state, term=term or self.role)
        self.generation += 1

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class GradTape:
    net_id: int
    generation: int
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)


def forward(net: DenseNetwork, x: np.ndarray) -> tuple[np.ndarray, GradTape]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise StructuralError(f"{net.role} expects input width {net.in_dim}, got shape {x.shape}")
    tape = GradTape(id(net), net.generation)
    a = x
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        tape.inputs.append(a)
        tape.pre.append(z)
        a = _activate(layer.activation, z)
        tape.post.append(a)
    return a, tape


def backward(net: DenseNetwork, tape: GradTape, grad_output: np.ndarray, wrt_logits: bool = False):
    """Chain rule through `net` for the forward pass recorded on `tape`.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
    ``net.parameters()``. With ``wrt_logits`` the incoming gradient is taken
    with respect to the final pre-activation, skipping the last activation.
    """
    if tape.net_id != id(net) or tape.generation != net.generation:
        raise ContractError("tape was recorded for a different network or before a parameter update")
    grad = np.asarray(grad_output, dtype=np.float64)
    if grad.shape != tape.post[-1].shape:
        raise StructuralError(f"grad_output shape {grad.shape} does not match output {tape.post[-1].shape}")
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if not (wrt_logits and i == len(net.layers) - 1):
            grad = _activation_backward(layer.activation, tape.pre[i], tape.post[i], grad)
        grads[2 * i] = grad.T @ tape.inputs[i]
        grads[2 * i + 1] = grad.sum(axis=0)
        grad = grad @ layer.weight
    return grads, grad


def grl_forward(x):
    return x


def grl_backward(upstream_grad, coeff: float):
    """Backward rule of the gradient reversal layer."""
    if not np.isfinite(coeff):
        raise NonFiniteError(f"reversal coefficient is not finite: {coeff}")
    return -coeff * np.asarray(upstream_grad, dtype=np.float64)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **hyper) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state: AdamState, term: str = "parameters"):
    """In-place bias-corrected Adam update; returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise StructuralError("params, grads and optimizer state disagree in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise StructuralError(f"{term}: gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {term} (tensor {i})")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    step = state.lr * np.sqrt(1.0 - b2**state.t) / (1.0 - b1**state.t)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        # algebraically identical to lr * m_hat / (sqrt(v_hat) + eps)
        p -= step * m / (np.sqrt(v) + state.eps * np.sqrt(1.0 - b2**state.t))
    return params, state


def mse_loss(x_hat: np.ndarray, x: np.ndarray):
    """Batch mean of squared row norms and its gradient with respect to `x_hat`."""
    if x_hat.shape != x.shape:
        raise StructuralError(f"reconstruction shape {x_hat.shape} != target shape {x.shape}")
    diff = x_hat - x
    b = x.shape[0]
    return float(np.sum(diff * diff) / b), 2.0 * diff / b


def cross_entropy_loss(probs: np.ndarray, targets: np.ndarray, floor: float = 1e-300):
    """Mean negative log-likelihood of `targets` plus its gradient with respect to the pre-softmax logits."""
    targets = np.asarray(targets)
    b, n_classes = probs.shape
    if targets.shape != (b,):
        raise StructuralError(f"targets shape {targets.shape} does not match {b} rows")
    if np.any(targets < 0) or np.any(targets >= n_classes):
        raise BoundsError(f"target ids must lie in [0, {n_classes})")
    rows = np.arange(b)
    loss = -np.mean(np.log(np.maximum(probs[rows, targets], floor)))
    grad = probs.copy()
    grad[rows, targets] -= 1.0
    return float(loss), grad / b


def save_checkpoint(path, networks: dict, optimizers: dict | None = None, config_hash: str = "", arrays: dict | None = None) -> None:
    """Store networks, Adam states and extra arrays in a single ``.npz`` container."""
    payload = {}
    meta = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "networks": {},
        "optimizers": {},
        "arrays": sorted((arrays or {}).keys()),
    }
    for name, net in networks.items():
        meta["networks"][name] = {"role": net.role, "activations": [l.activation for l in net.layers]}
        for i, p in enumerate(net.parameters()):
            payload[f"net/{name}/{i}"] = p
    for name, st in (optimizers or {}).items():
        meta["optimizers"][name] = {
            "t": st.t, "lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps, "n": len(st.m)
        }
        for i, (m, v) in enumerate(zip(st.m, st.v)):
            payload[f"opt/{name}/m/{i}"] = m
            payload[f"opt/{name}/v/{i}"] = v
    for name, arr in (arrays or {}).items():
        payload[f"arr/{name}"] = np.asarray(arr)
    payload["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    with open(Path(path), "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> dict:
    with np.load(Path(path), allow_pickle=False) as data:
        if "__meta__" not in data:
            raise StructuralError(f"{path}: not a checkpoint (missing metadata)")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("magic") != CHECKPOINT_MAGIC:
            raise StructuralError(f"{path}: bad magic {meta.get('magic')!r}")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise StructuralError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        networks = {}
        for name, info in meta["networks"].items():
            acts = info["activations"]
            layers = [
                Layer(data[f"net/{name}/{2 * i}"].copy(), data[f"net/{name}/{2 * i + 1}"].copy(), a)
                for i, a in enumerate(acts)
            ]
            networks[name] = DenseNetwork(layers, info["role"])
        optimizers = {}
        for name, info in meta["optimizers"].items():
            n = info.pop("n")
            optimizers[name] = AdamState(
                m=[data[f"opt/{name}/m/{i}"].copy() for i in range(n)],
                v=[data[f"opt/{name}/v/{i}"].copy() for i in range(n)],
                **info,
            )
        arrays = {name: data[f"arr/{name}"].copy() for name in meta["arrays"]}
    return {"config_hash": meta["config_hash"], "networks": networks, "optimizers": optimizers, "arrays": arrays}
