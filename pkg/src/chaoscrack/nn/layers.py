"""Stateful layers: parameter containers over the functional ops.

Weight initialization is a zero-mean normal with std sqrt(gain / fan_in)
(fan_in counted as input channels times kernel area); gain defaults to 2
for relu-followed layers, and output-emitting layers should pass gain=1
since no relu halves their activation power.  Biases start at zero,
batchnorm affine terms at identity.  All draws come from the rng the
caller passes in, so a model build is reproducible from its seed.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Parameter, Tensor


class Conv2d:
    def __init__(self, in_channels, out_channels, kernel=4, stride=1,
                 padding=0, rng=None, dtype=np.float32, name="conv",
                 gain=2.0):
        fan_in = in_channels * kernel * kernel
        w = rng.normal(0.0, np.sqrt(gain / fan_in),
                       (out_channels, in_channels, kernel, kernel))
        self.weight = Parameter(w.astype(dtype), name=f"{name}.weight",
                                decay=True)
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype),
                              name=f"{name}.bias")
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride,
                          self.padding)

    def params(self):
        return [self.weight, self.bias]


class Deconv2d:
    def __init__(self, in_channels, out_channels, kernel=4, stride=1,
                 padding=0, rng=None, dtype=np.float32, name="deconv",
                 gain=2.0):
        fan_in = in_channels * kernel * kernel
        w = rng.normal(0.0, np.sqrt(gain / fan_in),
                       (in_channels, out_channels, kernel, kernel))
        self.weight = Parameter(w.astype(dtype), name=f"{name}.weight",
                                decay=True)
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype),
                              name=f"{name}.bias")
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.deconv2d(x, self.weight, self.bias, self.stride,
                            self.padding)

    def params(self):
        return [self.weight, self.bias]


class BatchNorm2d:
    MOMENTUM = 0.1
    EPS = 1e-5

    def __init__(self, channels, dtype=np.float32, name="bn"):
        self.gamma = Parameter(np.ones(channels, dtype=dtype),
                               name=f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels, dtype=dtype),
                              name=f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.name = name

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return ops.batchnorm(x, self.gamma, self.beta, self.running_mean,
                             self.running_var, train, self.MOMENTUM, self.EPS)

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [(f"{self.name}.running_mean", self.running_mean),
                (f"{self.name}.running_var", self.running_var)]


class Linear:
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32,
                 name="fc", gain=2.0):
        w = rng.normal(0.0, np.sqrt(gain / in_features),
                       (out_features, in_features))
        self.weight = Parameter(w.astype(dtype), name=f"{name}.weight",
                                decay=True)
        self.bias = Parameter(np.zeros(out_features, dtype=dtype),
                              name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def params(self):
        return [self.weight, self.bias]
