"""Parameterised layers with cached forward state for backpropagation."""
from __future__ import annotations

import numpy as np

from . import functional as F


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2D:
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, pad=0,
                 rng=None, dtype=np.float32):
        if kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.pad = pad
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        if rng is None:
            self.weight = np.zeros(shape, dtype=dtype)
        else:
            self.weight = he_uniform(rng, shape, fan_in, dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._x = self._cols = None

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        return (F.conv_output_size(h, self.kernel_size, self.stride, self.pad),
                F.conv_output_size(w, self.kernel_size, self.stride, self.pad))

    def forward(self, x):
        out, cols = F.conv2d_forward(x, self.weight, self.bias, self.stride, self.pad, return_cols=True)
        self._x, self._cols = x, cols
        return out

    def backward(self, dout):
        dx, self.dweight, self.dbias = F.conv2d_backward(
            dout, self._x, self.weight, self.stride, self.pad, cols=self._cols
        )
        self._x = self._cols = None
        return dx

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.dweight, "bias": self.dbias}


class Dense:
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        shape = (out_features, in_features)
        if rng is None:
            self.weight = np.zeros(shape, dtype=dtype)
        else:
            bound = 1.0 / np.sqrt(in_features)
            self.weight = rng.uniform(-bound, bound, size=shape).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x):
        self._x = x
        return F.dense_forward(x, self.weight, self.bias)

    def backward(self, dy):
        dx, self.dweight, self.dbias = F.dense_backward(dy, self._x, self.weight)
        self._x = None
        return dx

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.dweight, "bias": self.dbias}


class ResidualBlock:
    """``conv -> ReLU -> conv`` main path added to an identity (or 1x1 projection) skip.

    No activation follows the addition, so a block whose main path is all
    zeros is exactly the identity.
    """

    def __init__(self, in_channels, out_channels, stride=1, rng=None, dtype=np.float32):
        self.conv1 = Conv2D(in_channels, out_channels, 3, stride, 1, rng, dtype)
        self.conv2 = Conv2D(out_channels, out_channels, 3, 1, 1, rng, dtype)
        self.proj = None
        if stride != 1 or in_channels != out_channels:
            self.proj = Conv2D(in_channels, out_channels, 1, stride, 0, rng, dtype)
        self._mask = None
        self.outputs: dict[str, np.ndarray] = {}

    def forward(self, x, capture=False):
        h = self.conv1.forward(x)
        a, self._mask = F.relu_forward(h)
        main = self.conv2.forward(a)
        skip = x if self.proj is None else self.proj.forward(x)
        if main.shape != skip.shape:
            raise F.ShapeError(f"skip path {skip.shape} != main path {main.shape}")
        out = main + skip
        if capture:
            self.outputs = {"conv1": h, "relu": a, "conv2": main, "skip": skip}
        return out

    def backward(self, dout):
        da = self.conv2.backward(dout)
        dx = self.conv1.backward(F.relu_backward(da, self._mask))
        if self.proj is None:
            dx = dx + dout
        else:
            dx = dx + self.proj.backward(dout)
        return dx

    def convs(self):
        out = {"conv1": self.conv1, "conv2": self.conv2}
        if self.proj is not None:
            out["proj"] = self.proj
        return out
