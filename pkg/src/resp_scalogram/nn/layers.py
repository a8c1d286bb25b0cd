"""Layer definitions with explicit forward/backward passes over NHWC numpy arrays."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch

Shape = tuple[int, ...]


class Layer:
    """Base class. Shapes exclude the batch axis."""

    kind: ClassVar[str] = ""

    def out_shape(self, in_shape: Shape) -> Shape:
        return in_shape

    def param_shapes(self, in_shape: Shape) -> dict[str, Shape]:
        return {}

    def state_shapes(self, in_shape: Shape) -> dict[str, Shape]:
        return {}

    def init(self, in_shape: Shape, rng: np.random.Generator) -> tuple[dict, dict]:
        return {}, {}

    def madds(self, in_shape: Shape) -> int:
        return 0

    def forward(self, x, params, state, train, rng):
        raise NotImplementedError

    def backward(self, dy, cache, params):
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"type": self.kind, **asdict(self)}


def _kaiming_uniform(shape: Shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class Conv2D(Layer):
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    padding: str = "same"
    kind: ClassVar[str] = "Conv2D"

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        kh, kw = self.kernel
        if kh < 1 or kw < 1 or self.out_channels < 1:
            raise ValueError("kernel dims and out_channels must be >= 1")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.padding == "same" and (kh % 2 == 0 or kw % 2 == 0):
            raise ValueError("same padding needs odd kernel dims")

    def _pads(self) -> tuple[int, int]:
        if self.padding == "valid":
            return 0, 0
        return self.kernel[0] // 2, self.kernel[1] // 2

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeMismatch(f"Conv2D expects (H, W, C), got {in_shape}")
        h, w, _ = in_shape
        ph, pw = self._pads()
        ho, wo = h + 2 * ph - self.kernel[0] + 1, w + 2 * pw - self.kernel[1] + 1
        if ho < 1 or wo < 1:
            raise ShapeMismatch(f"Conv2D kernel {self.kernel} larger than input {in_shape}")
        return ho, wo, self.out_channels

    def param_shapes(self, in_shape):
        return {"weight": (*self.kernel, in_shape[2], self.out_channels),
                "bias": (self.out_channels,)}

    def init(self, in_shape, rng):
        shapes = self.param_shapes(in_shape)
        fan_in = self.kernel[0] * self.kernel[1] * in_shape[2]
        return {"weight": _kaiming_uniform(shapes["weight"], fan_in, rng),
                "bias": np.zeros(shapes["bias"])}, {}

    def madds(self, in_shape):
        ho, wo, _ = self.out_shape(in_shape)
        return self.kernel[0] * self.kernel[1] * in_shape[2] * self.out_channels * ho * wo

    def forward(self, x, params, state, train, rng):
        n, h, w, c = x.shape
        ph, pw = self._pads()
        kh, kw = self.kernel
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if ph or pw else x
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (n, ho, wo, c, kh, kw)
        ho, wo = win.shape[1:3]
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
        wmat = params["weight"].reshape(kh * kw * c, self.out_channels)
        y = (cols @ wmat + params["bias"]).reshape(n, ho, wo, self.out_channels)
        return y, (cols, xp.shape, x.shape)

    def backward(self, dy, cache, params, need_dx=True):
        cols, xp_shape, x_shape = cache
        kh, kw = self.kernel
        n, ho, wo, co = dy.shape
        c = x_shape[3]
        dy2 = dy.reshape(-1, co)
        grads = {"weight": (cols.T @ dy2).reshape(params["weight"].shape),
                 "bias": dy2.sum(axis=0)}
        if not need_dx:
            return None, grads
        dcols = (dy2 @ params["weight"].reshape(kh * kw * c, co).T).reshape(n, ho, wo, kh, kw, c)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + ho, j:j + wo, :] += dcols[:, :, :, i, j, :]
        ph, pw = self._pads()
        dx = dxp[:, ph:ph + x_shape[1], pw:pw + x_shape[2], :]
        return dx, grads


@dataclass(frozen=True)
class MaxPool2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""

    kind: ClassVar[str] = "MaxPool2"

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] < 2 or in_shape[1] < 2:
            raise ShapeMismatch(f"MaxPool2 expects (H>=2, W>=2, C), got {in_shape}")
        return in_shape[0] // 2, in_shape[1] // 2, in_shape[2]

    def forward(self, x, params, state, train, rng):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        blocks = (x[:, :2 * h2, :2 * w2, :]
                  .reshape(n, h2, 2, w2, 2, c)
                  .transpose(0, 1, 3, 5, 2, 4)
                  .reshape(n, h2, w2, c, 4))
        arg = blocks.argmax(axis=-1)
        y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
        return y, (arg, x.shape)

    def backward(self, dy, cache, params):
        arg, x_shape = cache
        n, h, w, c = x_shape
        h2, w2 = h // 2, w // 2
        dblocks = np.zeros((n, h2, w2, c, 4), dtype=dy.dtype)
        np.put_along_axis(dblocks, arg[..., None], dy[..., None], axis=-1)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        dx[:, :2 * h2, :2 * w2, :] = (dblocks.reshape(n, h2, w2, c, 2, 2)
                                      .transpose(0, 1, 4, 2, 5, 3)
                                      .reshape(n, 2 * h2, 2 * w2, c))
        return dx, {}


@dataclass(frozen=True)
class BatchNorm2D(Layer):
    """Per-channel normalization; batch statistics in training, running ones at inference."""

    eps: float = 1e-5
    momentum: float = 0.9
    kind: ClassVar[str] = "BatchNorm2D"

    def param_shapes(self, in_shape):
        return {"gamma": (in_shape[-1],), "beta": (in_shape[-1],)}

    def state_shapes(self, in_shape):
        return {"running_mean": (in_shape[-1],), "running_var": (in_shape[-1],)}

    def init(self, in_shape, rng):
        c = in_shape[-1]
        return ({"gamma": np.ones(c), "beta": np.zeros(c)},
                {"running_mean": np.zeros(c), "running_var": np.ones(c)})

    def forward(self, x, params, state, train, rng):
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if state is not None:
                m = self.momentum
                state["running_mean"] = m * state["running_mean"] + (1 - m) * mean
                state["running_var"] = m * state["running_var"] + (1 - m) * var
        else:
            mean, var = state["running_mean"], state["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        return params["gamma"] * xhat + params["beta"], (xhat, inv_std, train)

    def backward(self, dy, cache, params):
        xhat, inv_std, train = cache
        axes = tuple(range(dy.ndim - 1))
        grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
        dxhat = dy * params["gamma"]
        if not train:
            return dxhat * inv_std, grads
        m = dy.size // dy.shape[-1]
        dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes)
                              - xhat * (dxhat * xhat).sum(axis=axes))
        return dx, grads


@dataclass(frozen=True)
class ReLU(Layer):
    kind: ClassVar[str] = "ReLU"

    def forward(self, x, params, state, train, rng):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache, params):
        return dy * cache, {}


@dataclass(frozen=True)
class Flatten(Layer):
    kind: ClassVar[str] = "Flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, params, state, train, rng):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, params):
        return dy.reshape(cache), {}


@dataclass(frozen=True)
class Dense(Layer):
    """Fully connected layer; ``init_scale`` shrinks the Kaiming bound (used for the classifier head)."""

    out: int
    init_scale: float = 1.0
    kind: ClassVar[str] = "Dense"

    def __post_init__(self):
        if self.out < 1:
            raise ValueError("Dense out must be >= 1")

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeMismatch(f"Dense expects a flat input, got {in_shape}")
        return (self.out,)

    def param_shapes(self, in_shape):
        return {"weight": (in_shape[0], self.out), "bias": (self.out,)}

    def init(self, in_shape, rng):
        w = _kaiming_uniform((in_shape[0], self.out), in_shape[0], rng)
        return {"weight": self.init_scale * w, "bias": np.zeros(self.out)}, {}

    def madds(self, in_shape):
        return in_shape[0] * self.out

    def forward(self, x, params, state, train, rng):
        return x @ params["weight"] + params["bias"], x

    def backward(self, dy, cache, params):
        return dy @ params["weight"].T, {"weight": cache.T @ dy, "bias": dy.sum(axis=0)}


@dataclass(frozen=True)
class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-rate) during training."""

    rate: float = 0.5
    kind: ClassVar[str] = "Dropout"

    def __post_init__(self):
        if not 0 <= self.rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")

    def forward(self, x, params, state, train, rng):
        if not train or self.rate == 0:
            return x, None
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, dy, cache, params):
        return (dy if cache is None else dy * cache), {}


@dataclass(frozen=True)
class Softmax(Layer):
    kind: ClassVar[str] = "Softmax"

    def forward(self, x, params, state, train, rng):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        return y, y

    def backward(self, dy, cache, params):
        y = cache
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True)), {}


LAYER_TYPES: dict[str, type[Layer]] = {
    cls.kind: cls for cls in (Conv2D, MaxPool2, BatchNorm2D, ReLU, Flatten, Dense, Dropout, Softmax)
}


def layer_from_json(data: dict) -> Layer:
    data = dict(data)
    cls = LAYER_TYPES[data.pop("type")]
    if "kernel" in data:
        data["kernel"] = tuple(data["kernel"])
    return cls(**data)
