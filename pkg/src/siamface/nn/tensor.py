"""A small reverse-mode autodiff tensor.

Every operation on tensors that require gradients records its parents and a
closure that maps the output gradient to parent gradients. ``backward`` walks
that trace in reverse topological order and releases it afterwards.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from ..errors import InvalidArgument, TraceError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgument(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray, fresh: bool = False) -> None:
        """Add ``g`` into ``self.grad``. ``fresh`` hands over ownership of ``g`` (no copy)."""
        if not self.requires_grad:
            return
        g = np.asarray(g, dtype=self.data.dtype).reshape(self.data.shape)
        if self.grad is None:
            self.grad = g if fresh else np.array(g)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if not self.requires_grad:
            raise TraceError("backward() on a tensor without a recorded forward trace")
        if grad is None:
            if self.data.size != 1:
                raise InvalidArgument(f"backward() needs an explicit gradient for shape {self.shape}")
            grad = np.ones_like(self.data)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.accumulate(g)
                continue
            # interior nodes hand gradients to parents through a sink
            sink = _GradSink(grads)
            node._backward(g, sink)
            node._parents = ()
            node._backward = None
            node.requires_grad = False

    # arithmetic used by losses and tests; layers live in functional.py

    def sum(self) -> Tensor:
        shape = self.shape

        def back(g, sink):
            sink(self, np.broadcast_to(g, shape))

        return traced(np.asarray(self.data.sum(), dtype=self.dtype), (self,), back)

    def mean(self) -> Tensor:
        n = self.size
        shape = self.shape

        def back(g, sink):
            sink(self, np.broadcast_to(g / n, shape))

        return traced(np.asarray(self.data.mean(), dtype=self.dtype), (self,), back)

    def __mul__(self, other) -> Tensor:
        if isinstance(other, Tensor):
            if other.shape != self.shape:
                raise InvalidArgument(f"shape mismatch {self.shape} vs {other.shape}")

            def back(g, sink):
                sink(self, g * other.data)
                sink(other, g * self.data)

            return traced(self.data * other.data, (self, other), back)
        c = float(other)

        def back_scalar(g, sink):
            sink(self, g * c)

        return traced(self.data * self.dtype.type(c), (self,), back_scalar)

    __rmul__ = __mul__

    def __add__(self, other) -> Tensor:
        if isinstance(other, Tensor):
            if other.shape != self.shape:
                raise InvalidArgument(f"shape mismatch {self.shape} vs {other.shape}")

            def back(g, sink):
                sink(self, g)
                sink(other, g)

            return traced(self.data + other.data, (self, other), back)
        c = self.dtype.type(other)

        def back_scalar(g, sink):
            sink(self, g)

        return traced(self.data + c, (self,), back_scalar)

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        return self * -1.0

    def __sub__(self, other) -> Tensor:
        return self + (-other if isinstance(other, Tensor) else -float(other))


class _GradSink:
    __slots__ = ("_grads",)

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __call__(self, parent: Tensor, g: np.ndarray, fresh: bool = False) -> None:
        """Route ``g`` to ``parent``. Pass ``fresh=True`` only for arrays nobody else references."""
        if not parent.requires_grad:
            return
        if parent._backward is None:
            # leaves collect their gradient immediately; order does not matter for sums
            parent.accumulate(g, fresh)
            return
        prev = self._grads.get(id(parent))
        if prev is None:
            fresh = fresh and g.dtype == parent.data.dtype
            self._grads[id(parent)] = g if fresh else np.array(g, dtype=parent.data.dtype)
        else:
            prev += g


_state = threading.local()


@contextmanager
def no_grad() -> Iterator[None]:
    """Suspend trace recording on the current thread."""
    prev = getattr(_state, "disabled", False)
    _state.disabled = True
    try:
        yield
    finally:
        _state.disabled = prev


def traced(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Wrap an op result, recording the trace when any parent needs gradients.

    ``backward(g, sink)`` must call ``sink(parent, grad_for_parent)`` for each
    parent it differentiates.
    """
    needs = not getattr(_state, "disabled", False) and any(p.requires_grad for p in parents)
    out = Tensor(data)
    if needs:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def parameters_finite(params: Iterable[Tensor]) -> bool:
    return all(np.isfinite(p.data).all() for p in params)
