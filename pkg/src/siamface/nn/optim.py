from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import InvalidArgument, NumericError
from . import _kernels as kernels
from .tensor import Tensor


class SGD:
    """Momentum SGD: ``v = momentum * v + g``; ``p -= lr * v``.

    With ``momentum=0`` this is plain ``p -= lr * g``. A non-finite gradient
    raises :class:`NumericError` before any parameter is touched.
    """

    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0):
        if not lr > 0:
            raise InvalidArgument(f"learning rate must be positive, got {lr}")
        if momentum < 0:
            raise InvalidArgument(f"momentum must be non-negative, got {momentum}")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity: list[np.ndarray | None] = [None] * len(self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is not None and not _all_finite(p.grad):
                raise NumericError(f"non-finite gradient in parameter {i} of shape {p.shape}")
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            lr = p.dtype.type(self.lr)
            if not self.momentum:
                p.data -= g * lr
                continue
            v = self._velocity[i]
            if v is None:
                self._velocity[i] = v = np.array(g)
                p.data -= v * lr
            elif p.data.flags.c_contiguous and g.flags.c_contiguous and g.dtype == p.dtype:
                kernels.sgd_update(p.data.reshape(-1), g.reshape(-1), v.reshape(-1), lr, p.dtype.type(self.momentum))
            else:
                v *= self.momentum
                v += g
                p.data -= v * lr


def _all_finite(a: np.ndarray) -> bool:
    # min and max propagate NaN and surface +-inf without a temporary mask
    return a.size == 0 or bool(np.isfinite(a.min()) and np.isfinite(a.max()))
