"""Central finite-difference checks against the traced backward pass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-3) -> np.ndarray:
    grad = np.zeros_like(t.data, dtype=np.float64)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-3) -> float:
    """Max relative error between backprop and central differences over all inputs.

    ``fn`` must rebuild the scalar loss from scratch on every call.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    loss = fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    worst = 0.0
    for t, a in zip(inputs, analytic):
        worst = max(worst, relative_error(a, numerical_grad(fn, t, h)))
    return worst


@dataclass
class CheckResult:
    name: str
    max_rel_error: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < 1e-4


def _projected(out: Tensor, proj: np.ndarray) -> Tensor:
    return (out * Tensor(proj)).sum()


def run_suite(instances: int = 5, seed: int = 0) -> list[CheckResult]:
    """Gradient-check every layer kind plus the contrastive loss in float64."""
    from . import functional as F
    from ..siamese.loss import contrastive_loss

    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def t64(a) -> Tensor:
        return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)

    def record(name, errs):
        results.append(CheckResult(name, max(errs)))

    errs = []
    for _ in range(instances):
        x = t64(rng.normal(size=(2, 2, 4, 5)))
        proj = rng.normal(size=(2, 2, 6, 7))
        errs.append(gradcheck(lambda: _projected(F.reflection_pad(x, 1), proj), [x]))
    record("reflection_pad", errs)

    errs = []
    for _ in range(instances):
        x = t64(rng.normal(size=(2, 3, 5, 5)))
        w = t64(rng.normal(size=(2, 3, 3, 3)))
        b = t64(rng.normal(size=(2,)))
        proj = rng.normal(size=(2, 2, 3, 3))
        errs.append(gradcheck(lambda: _projected(F.conv2d(x, w, b), proj), [x, w, b]))
    record("conv2d", errs)

    errs = []
    for _ in range(instances):
        # keep every entry at least 0.1 away from the kink
        v = rng.uniform(0.1, 2.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
        x = t64(v)
        proj = rng.normal(size=(3, 4))
        errs.append(gradcheck(lambda: _projected(F.relu(x), proj), [x]))
    record("relu", errs)

    for training in (True, False):
        errs = []
        for _ in range(instances):
            x = t64(rng.normal(size=(3, 2, 3, 3)))
            gamma = t64(rng.uniform(0.5, 1.5, size=2))
            beta = t64(rng.normal(size=2))
            rm = rng.normal(size=2)
            rv = rng.uniform(0.5, 2.0, size=2)
            proj = rng.normal(size=(3, 2, 3, 3))

            def fn():
                # fresh buffer copies so finite differences never see drifting running stats
                return _projected(F.batchnorm(x, gamma, beta, rm.copy(), rv.copy(), training), proj)

            errs.append(gradcheck(fn, [x, gamma, beta]))
        record(f"batchnorm_{'train' if training else 'eval'}", errs)

    errs = []
    for _ in range(instances):
        # distinct values spaced well beyond h so no window changes its argmax
        v = rng.permutation(2 * 2 * 4 * 4).reshape(2, 2, 4, 4) * 0.05
        x = t64(v)
        proj = rng.normal(size=(2, 2, 2, 2))
        errs.append(gradcheck(lambda: _projected(F.maxpool2x2(x), proj), [x]))
    record("maxpool2x2", errs)

    errs = []
    for _ in range(instances):
        x = t64(rng.normal(size=(2, 2, 3, 3)))
        proj = rng.normal(size=(2, 18))
        errs.append(gradcheck(lambda: _projected(F.flatten(x), proj), [x]))
    record("flatten", errs)

    errs = []
    for _ in range(instances):
        x = t64(rng.normal(size=(3, 4)))
        w = t64(rng.normal(size=(2, 4)))
        b = t64(rng.normal(size=2))
        proj = rng.normal(size=(3, 2))
        errs.append(gradcheck(lambda: _projected(F.linear(x, w, b), proj), [x, w, b]))
    record("linear", errs)

    errs = []
    for _ in range(instances):
        margin = 3.0
        while True:
            av, bv = rng.normal(size=(6, 5)), rng.normal(size=(6, 5))
            # resample if any pair sits on the hinge, where the loss is not differentiable
            if np.all(np.abs(np.linalg.norm(av - bv, axis=1) - margin) > 0.05):
                break
        a, b = t64(av), t64(bv)
        labels = np.array([0, 1, 0, 1, 1, 0])
        errs.append(gradcheck(lambda: contrastive_loss(a, b, labels, margin), [a, b]))
    record("contrastive_loss", errs)
    return results
