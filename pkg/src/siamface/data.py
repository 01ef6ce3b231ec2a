"""ORL corpus loading, preprocessing, splitting and pair sampling.

The corpus is expected as ``<root>/s<subject>/<shot>.pgm`` (binary PGM,
maxval 255). Images are resized to the 100x100 network input and scaled to
[0, 1].
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InvalidArgument

INPUT_SIZE = 100
GENUINE = 0
IMPOSTOR = 1


@dataclass(frozen=True)
class RawImage:
    width: int
    height: int
    pixels: np.ndarray  # uint8, shape (height, width)
    source_path: str = ""


@dataclass(frozen=True, eq=False)
class FaceImage:
    pixels: np.ndarray  # float32 (100, 100) in [0, 1]
    source_path: str = ""
    subject_id: int | None = None
    shot_id: int | None = None

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class PairSample:
    a: FaceImage
    b: FaceImage
    label: int


@dataclass
class DataSplit:
    train: list[FaceImage]
    test: list[FaceImage]
    seed: int
    meta: dict = field(default_factory=dict)


_WS = b" \t\r\n\v\f"


def parse_pgm(data: bytes, source: str = "<bytes>") -> RawImage:
    """Decode a binary (P5) PGM with maxval 255. Header comments are skipped."""
    if data[:2] != b"P5":
        raise FormatError(f"{source}: not a binary PGM (magic {data[:2]!r})")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError(f"{source}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch in (b" ", b"\t", b"\r", b"\n", b"\v", b"\f"):
            pos += 1
        elif ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise FormatError(f"{source}: truncated PGM header")
            pos = end + 1
        else:
            start = pos
            while pos < len(data) and data[pos] not in _WS and data[pos : pos + 1] != b"#":
                pos += 1
            token = data[start:pos]
            if not token.isdigit():
                raise FormatError(f"{source}: bad PGM header token {token!r}")
            fields.append(int(token))
    if pos >= len(data) or data[pos] not in _WS:
        raise FormatError(f"{source}: missing whitespace after PGM header")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{source}: unsupported PGM maxval {maxval} (need 255)")
    if width < 1 or height < 1:
        raise FormatError(f"{source}: empty PGM extents {width}x{height}")
    need = width * height
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise FormatError(f"{source}: truncated PGM payload ({len(payload)} of {need} bytes)")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return RawImage(width, height, pixels, source)


def load_pgm(path: str | os.PathLike) -> RawImage:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise FormatError(f"{p}: cannot read: {exc}") from exc
    return parse_pgm(data, str(p))


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encode a 2-D array as binary PGM. Float input is taken as [0, 1]."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise InvalidArgument(f"PGM needs a 2-D array, got shape {arr.shape}")
    if arr.dtype.kind == "f":
        arr = np.clip(np.rint(arr * 255.0), 0, 255)
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes()


def write_pgm(path: str | os.PathLike, pixels: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(pixels))


def bilinear_resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Corner-aligned bilinear resampling: output corners land exactly on input corners."""
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape

    def axis(n_in: int, n_out: int):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.clip(np.floor(pos).astype(int), 0, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(h, height)
    x0, x1, fx = axis(w, width)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bottom * fy[:, None]


def preprocess(raw: RawImage, subject_id: int | None = None, shot_id: int | None = None) -> FaceImage:
    if raw.width < 2 or raw.height < 2:
        raise InvalidArgument(f"image {raw.width}x{raw.height} too small to resample")
    if raw.width == INPUT_SIZE and raw.height == INPUT_SIZE:
        resized = raw.pixels.astype(np.float64)
    else:
        resized = bilinear_resize(raw.pixels, INPUT_SIZE, INPUT_SIZE)
    pixels = np.clip(resized / 255.0, 0.0, 1.0).astype(np.float32)
    return FaceImage(pixels, raw.source_path, subject_id, shot_id)


_SUBJECT_DIR = re.compile(r"^s(\d+)$")
_SHOT_FILE = re.compile(r"^(\d+)\.pgm$")


def load_corpus(root: str | os.PathLike) -> list[FaceImage]:
    """Load every ``s<subject>/<shot>.pgm`` under ``root``, ordered by (subject, shot)."""
    root = Path(root)
    if not root.is_dir():
        raise FormatError(f"{root}: corpus directory not found")
    found: list[tuple[int, int, Path]] = []
    for sub in root.iterdir():
        m = _SUBJECT_DIR.match(sub.name)
        if not (m and sub.is_dir()):
            continue
        for f in sub.iterdir():
            fm = _SHOT_FILE.match(f.name)
            if fm:
                found.append((int(m.group(1)), int(fm.group(1)), f))
    found.sort()
    return [preprocess(load_pgm(path), subject, shot) for subject, shot, path in found]


def split(
    images: Sequence[FaceImage], seed: int, train_fraction: float = 0.9, expected: int | None = 400
) -> DataSplit:
    """Seeded per-image shuffle; the first ``train_fraction`` of it is the training set."""
    if expected is not None and len(images) != expected:
        raise InvalidArgument(f"corpus must hold {expected} images, found {len(images)}")
    if not 0 < train_fraction < 1:
        raise InvalidArgument(f"train_fraction must lie in (0, 1), got {train_fraction}")
    perm = np.random.default_rng(seed).permutation(len(images))
    n_train = int(round(train_fraction * len(images)))
    train = [images[i] for i in perm[:n_train]]
    test = [images[i] for i in perm[n_train:]]
    return DataSplit(train, test, seed)


def write_manifest(data_split: DataSplit, path: str | os.PathLike) -> None:
    lines = [f"# seed {data_split.seed}"]
    lines += [f"{img.source_path}\ttrain" for img in data_split.train]
    lines += [f"{img.source_path}\ttest" for img in data_split.test]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | os.PathLike) -> tuple[int | None, list[tuple[str, str]]]:
    seed = None
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if line.startswith("# seed "):
            seed = int(line.split()[2])
            continue
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in ("train", "test"):
            raise FormatError(f"{path}:{lineno}: expected '<path>\\t<train|test>'")
        rows.append((parts[0], parts[1]))
    return seed, rows


def _by_subject(images: Sequence[FaceImage]) -> dict[int, list[FaceImage]]:
    groups: dict[int, list[FaceImage]] = {}
    for img in images:
        if img.subject_id is None:
            raise InvalidArgument(f"{img.source_path or 'image'} has no subject id")
        groups.setdefault(img.subject_id, []).append(img)
    return groups


def sample_pairs(
    images: Sequence[FaceImage],
    count: int,
    genuine_fraction: float = 0.5,
    seed: int | np.random.Generator = 0,
) -> list[PairSample]:
    """Draw labelled pairs; each pair is genuine with probability ``genuine_fraction``."""
    if not images:
        raise InvalidArgument("cannot sample pairs from an empty image set")
    if not 0.0 <= genuine_fraction <= 1.0:
        raise InvalidArgument(f"genuine_fraction must lie in [0, 1], got {genuine_fraction}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    groups = _by_subject(images)
    subjects = sorted(groups)
    multi = [s for s in subjects if len(groups[s]) >= 2]
    if genuine_fraction > 0 and not multi:
        raise InvalidArgument("no subject has two images; genuine pairs are impossible")
    if genuine_fraction < 1 and len(subjects) < 2:
        raise InvalidArgument("fewer than two subjects; impostor pairs are impossible")

    pairs = []
    for _ in range(count):
        if rng.random() < genuine_fraction:
            members = groups[multi[rng.integers(len(multi))]]
            i, j = rng.choice(len(members), size=2, replace=False)
            pairs.append(PairSample(members[i], members[j], GENUINE))
        else:
            s1, s2 = rng.choice(len(subjects), size=2, replace=False)
            g1, g2 = groups[subjects[s1]], groups[subjects[s2]]
            pairs.append(PairSample(g1[rng.integers(len(g1))], g2[rng.integers(len(g2))], IMPOSTOR))
    return pairs
