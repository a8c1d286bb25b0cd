"""Model specification, parameter containers, forward/backward passes, Adam and checkpoints."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BadClassCount, MissingCache, ShapeMismatch
from .layers import (
    BatchNorm2D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2,
    ReLU,
    Shape,
    Softmax,
    layer_from_json,
)

DEFAULT_FC_WIDTHS = (188, 128, 96, 64, 32)
# Classifier head starts near-uniform so the initial loss is close to ln(n_classes).
HEAD_INIT_SCALE = 0.01
INPUT_SHAPE = (224, 224, 3)


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[Layer, ...]
    input_shape: Shape
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ShapeMismatch("model must end in Softmax")
        out = self.shapes()[-1]
        if out != (self.n_classes,):
            raise ShapeMismatch(f"model output {out} does not match {self.n_classes} classes")

    def shapes(self) -> list[Shape]:
        """Input shape followed by the output shape of every layer."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(tuple(layer.out_shape(shapes[-1])))
        return shapes

    def to_json(self) -> dict:
        return {"input_shape": list(self.input_shape), "n_classes": self.n_classes,
                "layers": [layer.to_json() for layer in self.layers]}

    @classmethod
    def from_json(cls, data: dict) -> "ModelSpec":
        return cls(tuple(layer_from_json(d) for d in data["layers"]),
                   tuple(data["input_shape"]), int(data["n_classes"]))


def build_proposed(classes: int = 6, fc_widths=DEFAULT_FC_WIDTHS, dropout: float = 0.5,
                   input_shape: Shape = INPUT_SHAPE) -> ModelSpec:
    """Lightweight CNN: a 5x5x64 conv block, three 3x3 conv+BN blocks (64, 96, 96),
    five Dense+ReLU+Dropout pairs and a softmax classifier."""
    if classes not in (3, 6):
        raise BadClassCount(f"classes must be 3 or 6, got {classes}")
    layers: list[Layer] = [Conv2D(64, (5, 5)), ReLU(), MaxPool2()]
    for width in (64, 96, 96):
        layers += [Conv2D(width, (3, 3)), BatchNorm2D(), ReLU(), MaxPool2()]
    layers.append(Flatten())
    for width in fc_widths:
        layers += [Dense(int(width)), ReLU(), Dropout(dropout)]
    layers += [Dense(classes, init_scale=HEAD_INIT_SCALE), Softmax()]
    return ModelSpec(tuple(layers), input_shape, classes)


def _key(i: int, name: str) -> str:
    return f"{i}.{name}"


@dataclass
class Weights:
    """Trainable parameters and non-trainable state (BN running statistics), keyed ``<layer>.<name>``."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    state: dict[str, np.ndarray] = field(default_factory=dict)

    def layer_params(self, i: int, layer: Layer, in_shape: Shape) -> dict[str, np.ndarray]:
        return {n: self.params[_key(i, n)] for n in layer.param_shapes(in_shape)}

    def layer_state(self, i: int, layer: Layer, in_shape: Shape) -> dict[str, np.ndarray]:
        return {n: self.state[_key(i, n)] for n in layer.state_shapes(in_shape)}

    def astype(self, dtype) -> "Weights":
        return Weights({k: v.astype(dtype) for k, v in self.params.items()},
                       {k: v.astype(dtype) for k, v in self.state.items()})

    def copy(self) -> "Weights":
        return Weights(
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.state.items()})


def init_weights(spec: ModelSpec, seed: int = 0) -> Weights:
    rng = np.random.default_rng(seed)
    weights = Weights()
    for i, (layer, in_shape) in enumerate(zip(spec.layers, spec.shapes())):
        params, state = layer.init(in_shape, rng)
        weights.params.update({_key(i, n): v for n, v in params.items()})
        weights.state.update({_key(i, n): v for n, v in state.items()})
    return weights


@dataclass
class ForwardCache:
    layer_caches: list
    logits: np.ndarray
    probs: np.ndarray
    train: bool


def forward(spec: ModelSpec, weights: Weights, x: np.ndarray, train: bool = False,
            seed: int = 0) -> tuple[np.ndarray, ForwardCache]:
    """Class probabilities for a batch ``x`` of shape (N, *input_shape).

    Training mode enables dropout and batch statistics (and updates BN running
    statistics in ``weights.state``).
    """
    if tuple(x.shape[1:]) != spec.input_shape:
        raise ShapeMismatch(f"input {x.shape[1:]} does not match model input {spec.input_shape}")
    rng = np.random.default_rng(seed)
    caches = []
    shapes = spec.shapes()
    h = x
    logits = None
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Softmax):
            logits = h
        params = weights.layer_params(i, layer, shapes[i])
        state = weights.layer_state(i, layer, shapes[i]) if layer.state_shapes(shapes[i]) else None
        h, cache = layer.forward(h, params, state, train, rng)
        if state is not None and train:
            weights.state.update({_key(i, n): v for n, v in state.items()})
        caches.append(cache)
    return h, ForwardCache(caches, logits, h, train)


def calibrate_batchnorm(spec: ModelSpec, weights: Weights, x: np.ndarray) -> None:
    """Set every BN layer's running statistics to the batch statistics of ``x``.

    Afterwards inference mode reproduces the (dropout-free) training-mode
    output on that batch.
    """
    shapes = spec.shapes()
    rng = np.random.default_rng(0)
    h = x
    for i, layer in enumerate(spec.layers):
        params = weights.layer_params(i, layer, shapes[i])
        if isinstance(layer, BatchNorm2D):
            axes = tuple(range(h.ndim - 1))
            weights.state[_key(i, "running_mean")] = h.mean(axis=axes)
            weights.state[_key(i, "running_var")] = h.var(axis=axes)
        state = weights.layer_state(i, layer, shapes[i]) if layer.state_shapes(shapes[i]) else None
        h, _ = layer.forward(h, params, state, False, rng)


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy from logits and one-hot targets, via log-softmax."""
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-(targets * log_p).sum() / logits.shape[0])


def backward(spec: ModelSpec, weights: Weights, cache: ForwardCache | None,
             targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy and its gradient for every trainable tensor."""
    if cache is None or not cache.layer_caches:
        raise MissingCache("backward needs the cache of a forward pass")
    if targets.shape != cache.probs.shape:
        raise ShapeMismatch(f"targets {targets.shape} vs outputs {cache.probs.shape}")
    loss = cross_entropy(cache.logits, targets)
    shapes = spec.shapes()
    grads: dict[str, np.ndarray] = {}
    # Softmax and cross-entropy combine into (p - y) / N at the logits.
    d = (cache.probs - targets) / targets.shape[0]
    for i in range(len(spec.layers) - 2, -1, -1):
        layer = spec.layers[i]
        params = weights.layer_params(i, layer, shapes[i])
        if i == 0 and isinstance(layer, Conv2D):
            d, layer_grads = layer.backward(d, cache.layer_caches[i], params, need_dx=False)
        else:
            d, layer_grads = layer.backward(d, cache.layer_caches[i], params)
        grads.update({_key(i, n): g for n, g in layer_grads.items()})
    return loss, grads


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              config: AdamConfig) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)


MAGIC = b"RSCNNCKP"
VERSION = 1


def save_checkpoint(path: str | Path, spec: ModelSpec, weights: Weights) -> None:
    """Header (magic, version, JSON spec + tensor table) then little-endian float64 tensors."""
    names = sorted(weights.params) + sorted(weights.state)
    order = sorted(names, key=lambda k: (int(k.split(".")[0]), k))
    tensors = {**weights.params, **weights.state}
    header = {
        "spec": spec.to_json(),
        "tensors": [{"name": k, "shape": list(tensors[k].shape),
                     "trainable": k in weights.params} for k in order],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for k in order:
            fh.write(np.ascontiguousarray(tensors[k], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelSpec, Weights]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, n = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(n))
        weights = Weights()
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            arr = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
            (weights.params if entry["trainable"] else weights.state)[entry["name"]] = arr
    return ModelSpec.from_json(header["spec"]), weights
