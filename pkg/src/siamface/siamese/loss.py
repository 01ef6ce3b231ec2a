from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import InvalidArgument
from ..nn.tensor import Tensor, traced

DEFAULT_MARGIN = 2.0


def euclidean_distance(u: Sequence[float], v: Sequence[float]) -> float:
    a = np.asarray(u, dtype=np.float64).reshape(-1)
    b = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise InvalidArgument(f"embedding lengths differ: {a.size} vs {b.size}")
    diff = a - b
    return math.sqrt(float(np.dot(diff, diff)))


def pair_loss(d: float, label: int, margin: float = DEFAULT_MARGIN) -> float:
    """Contrastive loss of one pair at distance ``d`` (label 0 genuine, 1 impostor)."""
    if d < 0 or margin <= 0:
        raise InvalidArgument(f"need d >= 0 and margin > 0, got d={d}, margin={margin}")
    if label == 0:
        return 0.5 * d * d
    return 0.5 * max(0.0, margin - d) ** 2


def contrastive_loss(a: Tensor, b: Tensor, labels, margin: float = DEFAULT_MARGIN) -> Tensor:
    """Batch mean of the margin contrastive loss over paired embeddings ``a[i]``, ``b[i]``.

    Genuine pairs cost ``d^2 / 2``; impostor pairs cost ``max(0, margin - d)^2 / 2``.
    Where an impostor pair has ``d == 0`` the gradient direction is undefined
    and taken as zero.
    """
    if a.shape != b.shape or a.data.ndim != 2:
        raise InvalidArgument(f"embedding batches must share an N,D shape, got {a.shape} and {b.shape}")
    if margin <= 0:
        raise InvalidArgument(f"margin must be positive, got {margin}")
    y = np.asarray(labels).reshape(-1)
    if y.size != a.shape[0]:
        raise InvalidArgument(f"{y.size} labels for {a.shape[0]} pairs")
    dt = a.dtype
    impostor = (y != 0).astype(dt)
    diff = a.data - b.data
    sq = (diff * diff).sum(axis=1)
    d = np.sqrt(sq)
    hinge = np.maximum(dt.type(margin) - d, 0)
    per_pair = 0.5 * ((1 - impostor) * sq + impostor * hinge * hinge)
    n = y.size
    out = np.asarray(per_pair.mean(), dtype=dt)

    def back(g, sink):
        safe_d = np.where(d > 0, d, 1)
        coef = (1 - impostor) - impostor * np.where(d > 0, hinge / safe_d, 0)
        ga = (g / n) * coef[:, None] * diff
        sink(a, ga)
        sink(b, -ga)

    return traced(out, (a, b), back)
