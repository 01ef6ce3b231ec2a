from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ..data import DataSplit, FaceImage, PairSample, sample_pairs
from ..errors import InvalidArgument, NumericError
from ..nn.optim import SGD
from ..nn.tensor import Tensor
from .loss import DEFAULT_MARGIN, contrastive_loss
from .network import SiameseNetwork, stack_images


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 5e-4
    momentum: float = 0.9
    margin: float = DEFAULT_MARGIN
    seed: int = 1
    genuine_fraction: float = 0.5

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgument(f"epochs must be >= 1, got {self.epochs}")
        if self.margin <= 0:
            raise InvalidArgument(f"margin must be positive, got {self.margin}")
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochReport:
    epoch: int
    loss: float  # loss of the epoch's final batch, the printed "Current loss"
    epoch_mean: float  # mean over all batches of the epoch

    def lines(self) -> list[str]:
        return [f"Epoch number {self.epoch}", f"Current loss {self.loss!r}"]


def pair_arrays(pairs: Sequence[PairSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x1 = stack_images([p.a for p in pairs])
    x2 = stack_images([p.b for p in pairs])
    labels = np.array([p.label for p in pairs], dtype=np.int64)
    return x1, x2, labels


def train_step(net: SiameseNetwork, opt: SGD, x1: np.ndarray, x2: np.ndarray, labels: np.ndarray, margin: float) -> float:
    net.train()
    o1, o2 = net(Tensor(x1), Tensor(x2))
    loss = contrastive_loss(o1, o2, labels, margin)
    value = loss.item()
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss {value}")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return value


def train(
    net: SiameseNetwork,
    split: DataSplit | Sequence[FaceImage],
    config: TrainConfig | None = None,
    progress: Callable[[str], None] | None = None,
) -> list[EpochReport]:
    """Train on freshly sampled pair batches; one epoch is ceil(len(train) / batch_size) batches."""
    config = config or TrainConfig()
    images = split.train if isinstance(split, DataSplit) else list(split)
    if not images:
        raise InvalidArgument("training set is empty")
    rng = np.random.default_rng(config.seed)
    opt = SGD(net.parameters(), config.learning_rate, config.momentum)
    steps = math.ceil(len(images) / config.batch_size)
    reports = []
    for epoch in range(config.epochs):
        losses = []
        for batch in range(steps):
            pairs = sample_pairs(images, config.batch_size, config.genuine_fraction, rng)
            x1, x2, labels = pair_arrays(pairs)
            try:
                losses.append(train_step(net, opt, x1, x2, labels, config.margin))
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {batch}: {exc}") from exc
        report = EpochReport(epoch, losses[-1], float(np.mean(losses)))
        reports.append(report)
        if progress is not None:
            for line in report.lines():
                progress(line)
    net.eval()
    return reports


def overfit_batch(
    net: SiameseNetwork,
    pairs: Sequence[PairSample],
    steps: int = 200,
    learning_rate: float = 5e-4,
    momentum: float = 0.9,
    margin: float = DEFAULT_MARGIN,
    target: float | None = None,
) -> list[float]:
    """Repeatedly fit one fixed batch; returns the loss before each step.

    With ``target`` set, stops as soon as a step starts below it.
    """
    x1, x2, labels = pair_arrays(pairs)
    opt = SGD(net.parameters(), learning_rate, momentum)
    history = []
    for _ in range(steps):
        history.append(train_step(net, opt, x1, x2, labels, margin))
        if target is not None and history[-1] < target:
            break
    net.eval()
    return history
