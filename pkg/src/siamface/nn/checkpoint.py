"""Binary checkpoint format for a flat list of layers.

Layout (all integers and floats little-endian)::

    b"SFNN1\\n"
    u32 layer_count
    per layer:
        u8  tag_len, tag (ascii)
        u8  hparam_count, f64 hparams...
        u8  array_count
        per array: u8 ndim, u32 extents..., f32 data (row-major)

Arrays per layer, in order: weight, bias, running_mean, running_var
(whichever the layer kind owns).
"""

from __future__ import annotations

import io
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .layers import BatchNorm2d, Conv2d, Flatten, Linear, MaxPool2d, Module, ReflectionPad2d, ReLU
from .tensor import Tensor

MAGIC = b"SFNN1\n"


def _layer_arrays(layer: Module) -> list[np.ndarray]:
    arrays = [p.data for p in layer.parameters()]
    arrays.extend(layer.buffers())
    return arrays


def dumps(layers: list[Module]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(layers)))
    for layer in layers:
        tag = layer.kind.encode("ascii")
        buf.write(struct.pack("<B", len(tag)))
        buf.write(tag)
        hp = layer.hparams()
        buf.write(struct.pack("<B", len(hp)))
        buf.write(struct.pack(f"<{len(hp)}d", *hp))
        arrays = _layer_arrays(layer)
        buf.write(struct.pack("<B", len(arrays)))
        for arr in arrays:
            buf.write(struct.pack("<B", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def save(layers: list[Module], path: str | os.PathLike) -> None:
    Path(path).write_bytes(dumps(layers))


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.source}: truncated checkpoint at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _build(tag: str, hp: tuple[float, ...], source: str) -> Module:
    try:
        if tag == "ReflectionPad":
            return ReflectionPad2d(int(hp[0]))
        if tag == "Conv":
            cin, cout, k, stride = (int(v) for v in hp)
            if stride != 1:
                raise FormatError(f"{source}: unsupported conv stride {stride}")
            return Conv2d(cin, cout, k, rng=np.random.default_rng(0))
        if tag == "ReLU":
            return ReLU()
        if tag == "BatchNorm":
            return BatchNorm2d(int(hp[0]), eps=hp[1], momentum=hp[2])
        if tag == "MaxPool":
            return MaxPool2d()
        if tag == "Flatten":
            return Flatten()
        if tag == "Linear":
            return _EmptyLinear(int(hp[0]), int(hp[1]))
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{source}: bad hyperparameters for {tag}: {hp}") from exc
    raise FormatError(f"{source}: unknown layer kind {tag!r}")


def _EmptyLinear(fin: int, fout: int) -> Linear:
    # skip random init of a matrix that is about to be overwritten
    layer = Linear.__new__(Linear)
    layer.in_features, layer.out_features = fin, fout
    layer.weight = Tensor(np.zeros((fout, fin), dtype=np.float32), requires_grad=True)
    layer.bias = Tensor(np.zeros(fout, dtype=np.float32), requires_grad=True)
    return layer


def loads(data: bytes, source: str = "<bytes>") -> list[Module]:
    r = _Reader(data, source)
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError(f"{source}: bad checkpoint magic")
    (count,) = r.unpack("<I")
    layers: list[Module] = []
    for _ in range(count):
        (tlen,) = r.unpack("<B")
        try:
            tag = r.take(tlen).decode("ascii")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{source}: corrupt layer tag") from exc
        (nhp,) = r.unpack("<B")
        hp = r.unpack(f"<{nhp}d")
        layer = _build(tag, hp, source)
        slots = _layer_arrays(layer)
        (narr,) = r.unpack("<B")
        if narr != len(slots):
            raise FormatError(f"{source}: {tag} expects {len(slots)} arrays, found {narr}")
        loaded = []
        for expected in slots:
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            if tuple(shape) != expected.shape:
                raise FormatError(f"{source}: {tag} array extents {shape} do not match {expected.shape}")
            n = int(np.prod(shape))
            loaded.append(np.frombuffer(r.take(4 * n), dtype="<f4").astype(np.float32).reshape(shape))
        params = layer.parameters()
        for p, arr in zip(params, loaded):
            p.data = arr
        for i, arr in enumerate(loaded[len(params) :]):
            layer._set_buffer(i, arr)
        layers.append(layer)
    if r.pos != len(data):
        raise FormatError(f"{source}: {len(data) - r.pos} trailing bytes after last layer")
    return layers


def load(path: str | os.PathLike) -> list[Module]:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise FormatError(f"{p}: cannot read checkpoint: {exc}") from exc
    return loads(data, str(p))
