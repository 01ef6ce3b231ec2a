"""Face detector seam and the client-side motion gate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..data import RawImage
from ..errors import InvalidArgument

DEFAULT_TAU = 8 / 255


@dataclass(frozen=True)
class Box:
    x: int
    y: int
    w: int
    h: int


class DetectorPlugin(Protocol):
    name: str

    def detect(self, image: RawImage) -> list[Box]: ...


class PassThroughDetector:
    """Treats the whole frame as one face. Right for pre-cropped corpora."""

    name = "pass-through"

    def detect(self, image: RawImage) -> list[Box]:
        if image.width == 0 or image.height == 0:
            return []
        return [Box(0, 0, image.width, image.height)]


def crop(image: RawImage, box: Box) -> RawImage:
    if box.w < 1 or box.h < 1 or box.x < 0 or box.y < 0 or box.x + box.w > image.width or box.y + box.h > image.height:
        raise InvalidArgument(f"box {box} outside {image.width}x{image.height} image")
    pixels = image.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
    return RawImage(box.w, box.h, np.ascontiguousarray(pixels), image.source_path)


def motion_gate(prev: np.ndarray, cur: np.ndarray, tau: float = DEFAULT_TAU) -> bool:
    """True (triggered) iff the mean absolute difference exceeds ``tau``.

    Frames are uint8 (scaled by 1/255) or float in [0, 1].
    """
    a, b = _unit(prev), _unit(cur)
    if a.shape != b.shape:
        raise InvalidArgument(f"frame extents differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean()) > tau


def _unit(frame: np.ndarray) -> np.ndarray:
    arr = np.asarray(frame)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)
