"""Stateless layers with explicit forward/backward passes.

Each layer owns its parameter names and shapes but no parameter values;
values live in the model's parameter dict so that models stay immutable
during inference and attacks.  ``forward`` returns the output plus a
cache consumed by ``backward``; ``backward`` returns the input gradient
and a dict of parameter gradients.
"""

from __future__ import annotations

import numpy as np


class Layer:
    name = ""

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def init_params(self, rng: np.random.Generator, dtype) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, cache, gy):
        raise NotImplementedError


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense(Layer):
    def __init__(self, name: str, in_dim: int, out_dim: int):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim

    def param_shapes(self):
        return {
            f"{self.name}/W": (self.in_dim, self.out_dim),
            f"{self.name}/b": (self.out_dim,),
        }

    def init_params(self, rng, dtype):
        return {
            f"{self.name}/W": _he_uniform(rng, (self.in_dim, self.out_dim), self.in_dim, dtype),
            f"{self.name}/b": np.zeros(self.out_dim, dtype=dtype),
        }

    def output_shape(self, in_shape):
        return (self.out_dim,)

    def forward(self, params, x):
        y = x @ params[f"{self.name}/W"] + params[f"{self.name}/b"]
        return y, x

    def backward(self, params, cache, gy):
        x = cache
        grads = {
            f"{self.name}/W": x.T @ gy,
            f"{self.name}/b": gy.sum(axis=0),
        }
        gx = gy @ params[f"{self.name}/W"].T
        return gx, grads


class ReLU(Layer):
    def output_shape(self, in_shape):
        return in_shape

    def forward(self, params, x):
        return np.maximum(x, 0), x

    def backward(self, params, cache, gy):
        return gy * (cache > 0), {}


class Flatten(Layer):
    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, cache, gy):
        return gy.reshape(cache), {}


class Conv2D(Layer):
    """5x5-style valid convolution, stride 1, NHWC layout."""

    def __init__(self, name: str, ksize: int, in_channels: int, out_channels: int):
        self.name = name
        self.ksize = ksize
        self.cin = in_channels
        self.cout = out_channels

    def param_shapes(self):
        k = self.ksize
        return {
            f"{self.name}/W": (k, k, self.cin, self.cout),
            f"{self.name}/b": (self.cout,),
        }

    def init_params(self, rng, dtype):
        k = self.ksize
        fan_in = k * k * self.cin
        return {
            f"{self.name}/W": _he_uniform(rng, (k, k, self.cin, self.cout), fan_in, dtype),
            f"{self.name}/b": np.zeros(self.cout, dtype=dtype),
        }

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if c != self.cin:
            raise ValueError(f"{self.name}: expected {self.cin} input channels, got {c}")
        k = self.ksize
        if h < k or w < k:
            raise ValueError(f"{self.name}: input {h}x{w} smaller than kernel {k}x{k}")
        return (h - k + 1, w - k + 1, self.cout)

    def _patches(self, x):
        # (B, Ho, Wo, C, k, k) view -> (B*Ho*Wo, k*k*C) matrix
        k = self.ksize
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
        b, ho, wo = win.shape[:3]
        mat = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, k * k * self.cin)
        return mat, (b, ho, wo)

    def forward(self, params, x):
        w = params[f"{self.name}/W"].reshape(-1, self.cout)
        patches, (b, ho, wo) = self._patches(x)
        y = patches @ w + params[f"{self.name}/b"]
        return y.reshape(b, ho, wo, self.cout), (x.shape, patches)

    def backward(self, params, cache, gy):
        x_shape, patches = cache
        k = self.ksize
        b, ho, wo, _ = gy.shape
        gy_mat = gy.reshape(-1, self.cout)
        w = params[f"{self.name}/W"]
        grads = {
            f"{self.name}/W": (patches.T @ gy_mat).reshape(w.shape),
            f"{self.name}/b": gy_mat.sum(axis=0),
        }
        gpatch = (gy_mat @ w.reshape(-1, self.cout).T).reshape(b, ho, wo, k, k, self.cin)
        gx = np.zeros(x_shape, dtype=gy.dtype)
        for i in range(k):
            for j in range(k):
                gx[:, i:i + ho, j:j + wo, :] += gpatch[:, :, :, i, j, :]
        return gx, grads


class MaxPool2D(Layer):
    """2x2 max pooling, stride 2; gradients route to the first maximum."""

    def __init__(self, name: str = "pool"):
        self.name = name

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if h % 2 or w % 2:
            raise ValueError(f"{self.name}: spatial dims must be even, got {h}x{w}")
        return (h // 2, w // 2, c)

    def forward(self, params, x):
        b, h, w, c = x.shape
        ho, wo = h // 2, w // 2
        xr = x.reshape(b, ho, 2, wo, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(b, ho, wo, 4, c)
        idx = xr.argmax(axis=3)
        y = np.take_along_axis(xr, idx[:, :, :, None, :], axis=3).squeeze(3)
        return y, (x.shape, idx)

    def backward(self, params, cache, gy):
        x_shape, idx = cache
        b, h, w, c = x_shape
        ho, wo = h // 2, w // 2
        g = np.zeros((b, ho, wo, 4, c), dtype=gy.dtype)
        np.put_along_axis(g, idx[:, :, :, None, :], gy[:, :, :, None, :], axis=3)
        gx = g.reshape(b, ho, wo, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(x_shape)
        return gx, {}
