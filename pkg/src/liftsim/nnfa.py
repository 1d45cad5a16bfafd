"""Small dense ReLU networks in float64 with hand-written backprop."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")
_CHECKPOINT_ACT = {"relu": "relu", "identity": "id"}
_CHECKPOINT_ACT_INV = {v: k for k, v in _CHECKPOINT_ACT.items()}


class CheckpointError(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    def __init__(self, layer: int, param: str, index: tuple):
        super().__init__(f"non-finite gradient in layer {layer} {param}{list(index)}")
        self.layer = layer
        self.param = param
        self.index = index


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "Layer":
        return Layer(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class NetworkParams:
    layers: list

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.n_out,):
                raise ValueError(f"layer {k}: weight {layer.weight.shape} and bias "
                                 f"{layer.bias.shape} disagree")
            if k and layer.n_in != self.layers[k - 1].n_out:
                raise ValueError(f"layer {k} takes {layer.n_in} inputs but layer {k - 1} "
                                 f"produces {self.layers[k - 1].n_out}")
            if not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
                raise ValueError(f"layer {k}: non-finite parameters")
        if self.layers[-1].activation != "identity":
            raise ValueError("final layer must be linear (identity activation)")

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @property
    def sizes(self) -> list:
        return [self.n_in] + [layer.n_out for layer in self.layers]

    def copy(self) -> "NetworkParams":
        return NetworkParams([layer.copy() for layer in self.layers])

    def num_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers])

    def equals(self, other: "NetworkParams") -> bool:
        return len(self.layers) == len(other.layers) and all(
            a.activation == b.activation and np.array_equal(a.weight, b.weight)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers))


DEFAULT_SIZES = (27, 64, 64, 5)


def init_network(sizes: Sequence[int] = DEFAULT_SIZES, seed: int = 0) -> NetworkParams:
    """Uniform Glorot init; ReLU on hidden layers, linear output."""
    rng = np.random.default_rng(seed)
    layers = []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = math.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        act = "identity" if k == len(sizes) - 2 else "relu"
        layers.append(Layer(w, np.zeros(n_out), act))
    return NetworkParams(layers)


def _act(z, name):
    return np.maximum(z, 0.0) if name == "relu" else z


def _forward_cache(net: NetworkParams, x: np.ndarray):
    a = x
    cache = [a]
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        cache.append(z)
        a = _act(z, layer.activation)
    return a, cache


def _as_batch(net: NetworkParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.n_in:
        raise ValueError(f"input of shape {x.shape} does not match {net.n_in} inputs")
    return xb, single


def forward(net: NetworkParams, x) -> np.ndarray:
    """Evaluate on one vector ``(in,)`` or a batch ``(n, in)``."""
    xb, single = _as_batch(net, x)
    out, _ = _forward_cache(net, xb)
    return out[0] if single else out


def backward(net: NetworkParams, x, upstream) -> list:
    """Gradients of ``sum(upstream * forward(net, x))`` as ``[(dW, db), ...]``.

    For a batch the per-sample gradients are summed.
    """
    xb, single = _as_batch(net, x)
    g = np.asarray(upstream, dtype=float)
    g = g[None, :] if single else g
    if g.shape != (xb.shape[0], net.n_out):
        raise ValueError(f"upstream gradient shape {np.shape(upstream)} does not match output")
    _, cache = _forward_cache(net, xb)
    grads = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        z = cache[k + 1]
        if layer.activation == "relu":
            g = g * (z > 0)
        a_prev = cache[k] if k == 0 else _act(cache[k], net.layers[k - 1].activation)
        grads[k] = (g.T @ a_prev, g.sum(axis=0))
        g = g @ layer.weight
    return grads


def check_gradients(grads: list) -> None:
    for k, (dw, db) in enumerate(grads):
        for name, arr in (("weight", dw), ("bias", db)):
            if np.isfinite(arr).all():
                continue
            bad = np.argwhere(~np.isfinite(arr))
            if len(bad):
                raise NonFiniteGradient(k, name, tuple(int(i) for i in bad[0]))


def sgd_step(net: NetworkParams, grads: list, lr: float) -> NetworkParams:
    """Return a new network with every parameter moved by ``-lr * grad``."""
    if not lr > 0:
        raise ValueError("lr must be positive")
    check_gradients(grads)
    return NetworkParams([Layer(l.weight - lr * dw, l.bias - lr * db, l.activation)
                          for l, (dw, db) in zip(net.layers, grads)])


class Momentum:
    """Heavy-ball SGD; ``beta=0`` reduces to :func:`sgd_step`."""

    def __init__(self, beta: float = 0.9):
        self.beta = beta
        self.velocity: Optional[list] = None

    def step(self, net: NetworkParams, grads: list, lr: float) -> NetworkParams:
        check_gradients(grads)
        if self.velocity is None:
            self.velocity = [(np.zeros_like(dw), np.zeros_like(db)) for dw, db in grads]
        self.velocity = [(self.beta * vw + dw, self.beta * vb + db)
                         for (vw, vb), (dw, db) in zip(self.velocity, grads)]
        return sgd_step(net, self.velocity, lr)


def scale_gradients(grads: list, max_norm: float) -> list:
    norm = math.sqrt(sum(float((dw * dw).sum() + (db * db).sum()) for dw, db in grads))
    if not math.isfinite(norm) or norm <= max_norm:
        return grads
    c = max_norm / norm
    return [(dw * c, db * c) for dw, db in grads]


# --- checkpoints ----------------------------------------------------------

def to_checkpoint(net: NetworkParams, meta: Optional[dict] = None,
                  extra: Optional[dict] = None) -> dict:
    doc = {
        "layers": [
            {"in": l.n_in, "out": l.n_out,
             "w": [float(v) for v in l.weight.ravel()],
             "b": [float(v) for v in l.bias],
             "act": _CHECKPOINT_ACT[l.activation]}
            for l in net.layers
        ],
        "meta": dict(meta or {}),
    }
    doc["meta"].setdefault("created", "1970-01-01T00:00:00+00:00")
    doc["meta"].setdefault("config_hash", "0" * 16)
    if extra:
        doc.update(extra)
    return doc


def save_checkpoint(net: NetworkParams, sink: IO[str], meta: Optional[dict] = None,
                    extra: Optional[dict] = None) -> None:
    # json writes floats with repr, which round-trips exactly
    json.dump(to_checkpoint(net, meta, extra), sink, sort_keys=True)
    sink.write("\n")


def from_checkpoint(doc) -> NetworkParams:
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise CheckpointError("checkpoint must be an object with a 'layers' list")
    if not isinstance(doc.get("meta"), dict):
        raise CheckpointError("checkpoint is missing its 'meta' object")
    layers = []
    for k, spec in enumerate(doc["layers"]):
        try:
            n_in, n_out = int(spec["in"]), int(spec["out"])
            w = np.array(spec["w"], dtype=float)
            b = np.array(spec["b"], dtype=float)
            act = _CHECKPOINT_ACT_INV[spec["act"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"layer {k}: malformed entry ({exc})") from None
        if w.shape != (n_in * n_out,) or b.shape != (n_out,):
            raise CheckpointError(f"layer {k}: declared {n_out}x{n_in} but has "
                                  f"{w.size} weights and {b.size} biases")
        if layers and layers[-1].n_out != n_in:
            raise CheckpointError(f"dimension chain broken: layer {k - 1} outputs "
                                  f"{layers[-1].n_out} but layer {k} expects {n_in}")
        layers.append(Layer(w.reshape(n_out, n_in), b, act))
    try:
        return NetworkParams(layers)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None


def load_checkpoint(source: IO[str]) -> NetworkParams:
    try:
        doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not valid JSON: {exc}") from None
    return from_checkpoint(doc)
