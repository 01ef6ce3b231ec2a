"""Forward/backward kernels for the layer kinds the face network uses.

All kernels take and return :class:`Tensor`; NCHW layout throughout.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument
from . import _kernels
from .tensor import Tensor, traced


def _check_4d(x: Tensor, op: str) -> None:
    if x.data.ndim != 4:
        raise InvalidArgument(f"{op} expects an N,C,H,W tensor, got shape {x.shape}")


def _fold_reflect(g: np.ndarray, p: int, axis: int) -> np.ndarray:
    """Adjoint of reflect padding along one axis."""
    n_out = g.shape[axis]
    n = n_out - 2 * p
    core = [slice(None)] * g.ndim
    core[axis] = slice(p, p + n)
    out = np.array(g[tuple(core)])
    for r in range(p):
        # padded index r mirrors source p - r; padded index p + n + r mirrors n - 2 - r
        src = [slice(None)] * g.ndim
        dst = [slice(None)] * g.ndim
        src[axis] = r
        dst[axis] = p - r
        out[tuple(dst)] += g[tuple(src)]
        src[axis] = p + n + r
        dst[axis] = n - 2 - r
        out[tuple(dst)] += g[tuple(src)]
    return out


def reflection_pad(x: Tensor, p: int) -> Tensor:
    _check_4d(x, "reflection_pad")
    if p < 0:
        raise InvalidArgument(f"padding must be non-negative, got {p}")
    if p == 0:
        return x
    h, w = x.shape[2], x.shape[3]
    if p >= h or p >= w:
        raise InvalidArgument(f"padding {p} must be smaller than spatial extent {h}x{w}")
    out = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")

    def back(g, sink):
        sink(x, _fold_reflect(_fold_reflect(g, p, 2), p, 3))

    return traced(out, (x,), back)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 valid cross-correlation."""
    _check_4d(x, "conv2d")
    n, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if ci != c:
        raise InvalidArgument(f"conv2d channel mismatch: input has {c}, kernel expects {ci}")
    if kh > h or kw > w:
        raise InvalidArgument(f"kernel {kh}x{kw} larger than input {h}x{w}")
    ho, wo = h - kh + 1, w - kw + 1
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(weight.data, dtype=xd.dtype)

    out = np.zeros((n, o, ho, wo), dtype=xd.dtype)
    _kernels.conv_forward(xd, wd, out)
    if bias is not None:
        out += bias.data.astype(xd.dtype)[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g, sink):
        g = np.ascontiguousarray(g, dtype=xd.dtype)
        if weight.requires_grad:
            gw = np.zeros_like(wd)
            _kernels.conv_grad_weight(g, xd, gw)
            sink(weight, gw, fresh=True)
        if bias is not None:
            sink(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gx = np.zeros_like(xd)
            _kernels.conv_grad_input(g, wd, gx)
            sink(x, gx, fresh=True)

    return traced(out, parents, back)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, x.dtype.type(0))

    def back(g, sink):
        sink(x, np.where(out > 0, g, g.dtype.type(0)), fresh=True)

    return traced(out, (x,), back)


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalisation.

    In training mode the batch statistics normalise the input and the running
    buffers are updated in place as ``new = (1 - momentum) * old + momentum * batch``
    (the running variance takes the unbiased batch estimate). Evaluation mode
    reads the running buffers and never writes them.
    """
    _check_4d(x, "batchnorm")
    n, c, h, w = x.shape
    if c != gamma.shape[0]:
        raise InvalidArgument(f"batchnorm expects {gamma.shape[0]} channels, got {c}")
    xd = np.ascontiguousarray(x.data)
    m = n * h * w
    if training:
        if m < 2:
            raise InvalidArgument(f"batchnorm in training mode needs N*H*W >= 2 per channel, got {m}")
        mean, var = _kernels.channel_stats(xd)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / (m - 1))
    else:
        mean = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = np.empty_like(xd)
    out = np.empty_like(xd)
    _kernels.bn_apply(xd, mean, inv_std, gamma.data.astype(np.float64), beta.data.astype(np.float64), xhat, out)

    def back(g, sink):
        g = np.ascontiguousarray(g, dtype=xd.dtype)
        dx = np.empty_like(xd)
        dgamma = np.zeros(c)
        dbeta = np.zeros(c)
        _kernels.bn_backward(g, xhat, gamma.data.astype(np.float64), inv_std, training, dx, dgamma, dbeta)
        sink(gamma, dgamma)
        sink(beta, dbeta)
        sink(x, dx, fresh=True)

    return traced(out, (x, gamma, beta), back)


def maxpool2x2(x: Tensor) -> Tensor:
    """Non-overlapping 2x2 max pooling; ties route gradient to the first element in row-major order."""
    _check_4d(x, "maxpool2x2")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise InvalidArgument(f"maxpool2x2 needs even spatial extents, got {h}x{w}")
    windows = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def back(g, sink):
        onehot = np.zeros(windows.shape, dtype=g.dtype)
        np.put_along_axis(onehot, arg[..., None], g[..., None], axis=-1)
        gx = onehot.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        sink(x, gx)

    return traced(out, (x,), back)


def flatten(x: Tensor) -> Tensor:
    shape = x.shape

    def back(g, sink):
        sink(x, g.reshape(shape))

    return traced(x.data.reshape(shape[0], -1), (x,), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.data.ndim != 2:
        raise InvalidArgument(f"linear expects an N,F tensor, got shape {x.shape}")
    if x.shape[1] != weight.shape[1]:
        raise InvalidArgument(f"linear input width {x.shape[1]} does not match weight columns {weight.shape[1]}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out += bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g, sink):
        if weight.requires_grad:
            sink(weight, g.T @ xd, fresh=True)
        if bias is not None:
            sink(bias, g.sum(axis=0))
        if x.requires_grad:
            sink(x, g @ wd, fresh=True)

    return traced(out, parents, back)
