"""Layer objects holding parameters and hyperparameters around the functional kernels."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor


class Module:
    kind = ""
    training = True

    def parameters(self) -> list[Tensor]:
        return []

    def buffers(self) -> list[np.ndarray]:
        return []

    def hparams(self) -> tuple[float, ...]:
        return ()

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> Module:
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for i, b in enumerate(self.buffers()):
            self._set_buffer(i, b.astype(dtype))
        return self

    def _set_buffer(self, index: int, value: np.ndarray) -> None:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __repr__(self) -> str:
        return self.describe()


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = math.sqrt(1.0 / fan_in)
    data = rng.random(shape, dtype=np.float32)
    data *= np.float32(2 * bound)
    data -= np.float32(bound)
    return Tensor(data, requires_grad=True)


class ReflectionPad2d(Module):
    kind = "ReflectionPad"

    def __init__(self, padding: int):
        self.padding = int(padding)

    def hparams(self):
        return (self.padding,)

    def forward(self, x):
        return F.reflection_pad(x, self.padding)

    def describe(self):
        p = self.padding
        return f"ReflectionPad2d(({p}, {p}, {p}, {p}))"


class Conv2d(Module):
    kind = "Conv"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator | None = None):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        rng = rng or np.random.default_rng()
        fan_in = self.in_channels * self.kernel_size**2
        self.weight = _uniform(rng, (self.out_channels, self.in_channels, self.kernel_size, self.kernel_size), fan_in)
        self.bias = _uniform(rng, (self.out_channels,), fan_in)

    def parameters(self):
        return [self.weight, self.bias]

    def hparams(self):
        return (self.in_channels, self.out_channels, self.kernel_size, 1)

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias)

    def describe(self):
        k = self.kernel_size
        return f"Conv2d({self.in_channels}, {self.out_channels}, kernel_size=({k}, {k}), stride=(1, 1))"


class ReLU(Module):
    kind = "ReLU"

    def forward(self, x):
        return F.relu(x)

    def describe(self):
        return "ReLU(inplace)"


class BatchNorm2d(Module):
    kind = "BatchNorm"

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1):
        self.num_features = int(num_features)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.weight = Tensor(np.ones(self.num_features, dtype=np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(self.num_features, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(self.num_features, dtype=np.float32)
        self.running_var = np.ones(self.num_features, dtype=np.float32)

    def parameters(self):
        return [self.weight, self.bias]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def _set_buffer(self, index, value):
        if index == 0:
            self.running_mean = value
        else:
            self.running_var = value

    def hparams(self):
        return (self.num_features, self.eps, self.momentum)

    def forward(self, x):
        return F.batchnorm(
            x, self.weight, self.bias, self.running_mean, self.running_var, self.training, self.momentum, self.eps
        )

    def describe(self):
        return (
            f"BatchNorm2d({self.num_features}, eps={self.eps:g}, momentum={self.momentum:g}, "
            "affine=True, track_running_stats=True)"
        )


class MaxPool2d(Module):
    kind = "MaxPool"

    def forward(self, x):
        return F.maxpool2x2(x)

    def describe(self):
        return "MaxPool2d(kernel_size=2, stride=2)"


class Flatten(Module):
    kind = "Flatten"

    def forward(self, x):
        return F.flatten(x)

    def describe(self):
        return "Flatten()"


class Linear(Module):
    kind = "Linear"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        rng = rng or np.random.default_rng()
        self.weight = _uniform(rng, (self.out_features, self.in_features), self.in_features)
        self.bias = _uniform(rng, (self.out_features,), self.in_features)

    def parameters(self):
        return [self.weight, self.bias]

    def hparams(self):
        return (self.in_features, self.out_features)

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)

    def describe(self):
        return f"Linear(in_features={self.in_features}, out_features={self.out_features}, bias=True)"


class Sequential(Module):
    kind = "Sequential"

    def __init__(self, layers: list[Module]):
        self.layers = list(layers)

    def __iter__(self) -> Iterator[Module]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, i: int) -> Module:
        return self.layers[i]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def train(self, mode: bool = True):
        self.training = mode
        for layer in self.layers:
            layer.train(mode)
        return self

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def describe(self):
        return "\n".join(f"({i}): {layer.describe()}" for i, layer in enumerate(self.layers))
