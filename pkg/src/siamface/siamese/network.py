from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from ..data import INPUT_SIZE, FaceImage
from ..errors import FormatError, InvalidArgument
from ..nn import checkpoint
from ..nn.layers import BatchNorm2d, Conv2d, Flatten, Linear, Module, ReflectionPad2d, ReLU, Sequential
from ..nn.tensor import Tensor, no_grad, traced

EMBEDDING_DIM = 5

# Layer listing the assembled network must reproduce verbatim.
GOLDEN_CNN = (
    "ReflectionPad2d((1, 1, 1, 1))",
    "Conv2d(1, 4, kernel_size=(3, 3), stride=(1, 1))",
    "ReLU(inplace)",
    "BatchNorm2d(4, eps=1e-05, momentum=0.1, affine=True, track_running_stats=True)",
    "ReflectionPad2d((1, 1, 1, 1))",
    "Conv2d(4, 8, kernel_size=(3, 3), stride=(1, 1))",
    "ReLU(inplace)",
    "BatchNorm2d(8, eps=1e-05, momentum=0.1, affine=True, track_running_stats=True)",
    "ReflectionPad2d((1, 1, 1, 1))",
    "Conv2d(8, 8, kernel_size=(3, 3), stride=(1, 1))",
    "ReLU(inplace)",
    "BatchNorm2d(8, eps=1e-05, momentum=0.1, affine=True, track_running_stats=True)",
)
GOLDEN_HEAD = (
    "Flatten()",
    "Linear(in_features=80000, out_features=500, bias=True)",
    "ReLU(inplace)",
    "Linear(in_features=500, out_features=500, bias=True)",
    "ReLU(inplace)",
    "Linear(in_features=500, out_features=5, bias=True)",
)


def _rows(t: Tensor, start: int, stop: int) -> Tensor:
    shape = t.shape

    def back(g, sink):
        full = np.zeros(shape, dtype=g.dtype)
        full[start:stop] = g
        sink(t, full)

    return traced(t.data[start:stop], (t,), back)


class SiameseNetwork:
    """Twin branches sharing one convolutional trunk and one fully connected head."""

    def __init__(self, cnn: Sequential, head: Sequential):
        self.cnn = cnn
        self.head = head

    @classmethod
    def build(cls, seed: int = 0) -> SiameseNetwork:
        rng = np.random.default_rng(seed)
        cnn = Sequential(
            [
                ReflectionPad2d(1),
                Conv2d(1, 4, 3, rng=rng),
                ReLU(),
                BatchNorm2d(4),
                ReflectionPad2d(1),
                Conv2d(4, 8, 3, rng=rng),
                ReLU(),
                BatchNorm2d(8),
                ReflectionPad2d(1),
                Conv2d(8, 8, 3, rng=rng),
                ReLU(),
                BatchNorm2d(8),
            ]
        )
        head = Sequential(
            [
                Flatten(),
                Linear(8 * INPUT_SIZE * INPUT_SIZE, 500, rng=rng),
                ReLU(),
                Linear(500, 500, rng=rng),
                ReLU(),
                Linear(500, EMBEDDING_DIM, rng=rng),
            ]
        )
        return cls(cnn, head)

    @property
    def layers(self) -> list[Module]:
        return self.cnn.layers + self.head.layers

    @property
    def training(self) -> bool:
        return self.cnn.training

    def parameters(self) -> list[Tensor]:
        return self.cnn.parameters() + self.head.parameters()

    def train(self, mode: bool = True) -> SiameseNetwork:
        self.cnn.train(mode)
        self.head.train(mode)
        return self

    def eval(self) -> SiameseNetwork:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def descriptor(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        return tuple(l.describe() for l in self.cnn), tuple(l.describe() for l in self.head)

    def __repr__(self) -> str:
        cnn, head = self.descriptor()
        body = ["SiameseNetwork(", "  (cnn1): Sequential("]
        body += [f"    ({i}): {d}" for i, d in enumerate(cnn)]
        body += ["  )", "  (fc1): Sequential("]
        body += [f"    ({i}): {d}" for i, d in enumerate(head)]
        body += ["  )", ")"]
        return "\n".join(body)

    def forward_once(self, x: Tensor) -> Tensor:
        if x.data.ndim != 4 or x.shape[1:] != (1, INPUT_SIZE, INPUT_SIZE):
            raise InvalidArgument(f"network input must be N,1,{INPUT_SIZE},{INPUT_SIZE}, got {x.shape}")
        return self.head(self.cnn(x))

    def forward(self, x1: Tensor, x2: Tensor) -> tuple[Tensor, Tensor]:
        """Embed both sides of a pair batch in one pass through the shared weights.

        The two halves are stacked, so in training mode batch-norm statistics
        cover both branches together.
        """
        n = x1.shape[0]
        both = Tensor(np.concatenate([x1.data, x2.data]))
        out = self.forward_once(both)
        return _rows(out, 0, n), _rows(out, n, 2 * n)

    __call__ = forward


def stack_images(images: Sequence[FaceImage]) -> np.ndarray:
    for img in images:
        if img.pixels.shape != (INPUT_SIZE, INPUT_SIZE):
            raise InvalidArgument(f"face image must be {INPUT_SIZE}x{INPUT_SIZE}, got {img.pixels.shape}")
    return np.stack([img.pixels for img in images]).astype(np.float32)[:, None]


def embed_batch(net: SiameseNetwork, images: Sequence[FaceImage], batch_size: int = 32) -> np.ndarray:
    """Embed images with a frozen (evaluation-mode) network. Returns float32 (N, 5)."""
    if net.training:
        raise InvalidArgument("embedding requires an evaluation-mode network; call net.eval()")
    if not images:
        return np.zeros((0, EMBEDDING_DIM), dtype=np.float32)
    x = stack_images(images)
    chunks = []
    with no_grad():
        for i in range(0, len(x), batch_size):
            chunks.append(net.forward_once(Tensor(x[i : i + batch_size])).data)
    return np.concatenate(chunks).astype(np.float32)


def embed(net: SiameseNetwork, img: FaceImage) -> np.ndarray:
    return embed_batch(net, [img])[0]


def save_checkpoint(net: SiameseNetwork, path: str | os.PathLike) -> None:
    checkpoint.save(net.layers, path)


def load_checkpoint(path: str | os.PathLike) -> SiameseNetwork:
    layers = checkpoint.load(path)
    n_cnn = len(GOLDEN_CNN)
    net = SiameseNetwork(Sequential(layers[:n_cnn]), Sequential(layers[n_cnn:]))
    if net.descriptor() != (GOLDEN_CNN, GOLDEN_HEAD):
        raise FormatError(f"{path}: checkpoint does not hold the face network layout")
    return net.eval()
