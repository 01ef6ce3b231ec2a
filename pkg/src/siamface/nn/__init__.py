"""Minimal tensor engine: trace-based autodiff, the face network's layer set, SGD, checkpoints."""

from . import checkpoint, functional
from .functional import batchnorm, conv2d, flatten, linear, maxpool2x2, reflection_pad, relu
from .gradcheck import gradcheck, numerical_grad, relative_error, run_suite
from .layers import BatchNorm2d, Conv2d, Flatten, Linear, MaxPool2d, Module, ReflectionPad2d, ReLU, Sequential
from .optim import SGD
from .tensor import Tensor, no_grad, traced

__all__ = [
    "SGD",
    "BatchNorm2d",
    "Conv2d",
    "Flatten",
    "Linear",
    "MaxPool2d",
    "Module",
    "ReLU",
    "ReflectionPad2d",
    "Sequential",
    "Tensor",
    "batchnorm",
    "checkpoint",
    "conv2d",
    "flatten",
    "functional",
    "gradcheck",
    "linear",
    "maxpool2x2",
    "no_grad",
    "numerical_grad",
    "reflection_pad",
    "relative_error",
    "relu",
    "run_suite",
    "traced",
]
