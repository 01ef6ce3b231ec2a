"""Append-only store of (user_id, embedding) records with exhaustive top-k search.

User ids are deliberately not unique: enrolling the same person several
times lets one identity occupy several of the top-k slots at query time.

Binary file layout (little-endian)::

    b"SFGAL1\\n", u8 dim
    per record: u16 id_len, utf-8 id, f64 enrolled_at, dim x f32
"""

from __future__ import annotations

import csv
import os
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument

MAGIC = b"SFGAL1\n"
DIM = 5


@dataclass(frozen=True, eq=False)
class GalleryRecord:
    user_id: str
    embedding: np.ndarray
    enrolled_at: float


@dataclass(frozen=True)
class Match:
    user_id: str
    distance: float
    index: int = -1


def _validate(user_id: str, embedding, dim: int) -> np.ndarray:
    if not isinstance(user_id, str) or not user_id:
        raise InvalidArgument("user_id must be a non-empty string")
    if "\n" in user_id or "," in user_id:
        raise InvalidArgument(f"user_id may not contain commas or newlines: {user_id!r}")
    vec = np.asarray(embedding, dtype=np.float32).reshape(-1)
    if vec.size != dim:
        raise InvalidArgument(f"embedding must have {dim} components, got {vec.size}")
    if not np.isfinite(vec).all():
        raise InvalidArgument("embedding contains NaN or Inf")
    return vec


class Gallery:
    """Thread-safe gallery: enrolls are serialised, queries read a consistent prefix."""

    def __init__(self, path: str | os.PathLike | None = None, dim: int = DIM):
        self.path = Path(path) if path is not None else None
        self.dim = dim
        self._lock = threading.Lock()
        self._ids: list[str] = []
        self._times: list[float] = []
        self._vecs = np.zeros((16, dim), dtype=np.float32)
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def enroll(self, user_id: str, embedding, enrolled_at: float | None = None) -> int:
        vec = _validate(user_id, embedding, self.dim)
        stamp = time.time() if enrolled_at is None else float(enrolled_at)
        with self._lock:
            n = self._n
            if n == len(self._vecs):
                # readers holding the old buffer keep a valid prefix
                grown = np.zeros((2 * n, self.dim), dtype=np.float32)
                grown[:n] = self._vecs[:n]
                self._vecs = grown
            self._vecs[n] = vec
            self._ids.append(user_id)
            self._times.append(stamp)
            self._n = n + 1
            return n

    def _snapshot(self) -> tuple[list[str], list[float], np.ndarray]:
        with self._lock:
            n = self._n
            return self._ids, self._times, self._vecs[:n]

    def records(self) -> list[GalleryRecord]:
        ids, times, vecs = self._snapshot()
        return [GalleryRecord(ids[i], vecs[i].copy(), times[i]) for i in range(len(vecs))]

    def distances(self, probe) -> np.ndarray:
        p = np.asarray(probe, dtype=np.float64).reshape(-1)
        if p.size != self.dim:
            raise InvalidArgument(f"probe must have {self.dim} components, got {p.size}")
        _, _, vecs = self._snapshot()
        diff = vecs.astype(np.float64) - p
        return np.sqrt((diff * diff).sum(axis=1))

    def top_k(self, probe, k: int) -> list[Match]:
        """The ``k`` nearest records, ascending by distance; ties go to the earlier enrollment."""
        if k < 1:
            raise InvalidArgument(f"k must be >= 1, got {k}")
        p = np.asarray(probe, dtype=np.float64).reshape(-1)
        if p.size != self.dim:
            raise InvalidArgument(f"probe must have {self.dim} components, got {p.size}")
        ids, _, vecs = self._snapshot()
        if not len(vecs):
            return []
        diff = vecs.astype(np.float64) - p
        d = np.sqrt((diff * diff).sum(axis=1))
        order = np.argsort(d, kind="stable")[:k]
        return [Match(ids[i], float(d[i]), int(i)) for i in order]

    # persistence

    def dumps(self) -> bytes:
        ids, times, vecs = self._snapshot()
        parts = [MAGIC, struct.pack("<B", self.dim)]
        row = struct.Struct(f"<d{self.dim}f")
        for uid, stamp, vec in zip(ids, times, vecs):
            raw = uid.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
            parts.append(row.pack(stamp, *vec.tolist()))
        return b"".join(parts)

    def save(self, path: str | os.PathLike | None = None) -> Path:
        target = Path(path) if path is not None else self.path
        if target is None:
            raise InvalidArgument("no gallery path configured")
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_bytes(self.dumps())
        os.replace(tmp, target)
        return target

    @classmethod
    def loads(cls, data: bytes, source: str = "<bytes>", path=None) -> Gallery:
        if not data.startswith(MAGIC) or len(data) < len(MAGIC) + 1:
            raise FormatError(f"{source}: bad gallery header")
        dim = data[len(MAGIC)]
        gallery = cls(path, dim=dim)
        row = struct.Struct(f"<d{dim}f")
        pos = len(MAGIC) + 1
        rowno = 0
        while pos < len(data):
            rowno += 1
            if pos + 2 > len(data):
                raise FormatError(f"{source}: record {rowno}: truncated id length")
            (id_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            if pos + id_len + row.size > len(data):
                raise FormatError(f"{source}: record {rowno}: truncated record")
            try:
                uid = data[pos : pos + id_len].decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError(f"{source}: record {rowno}: id is not utf-8") from exc
            pos += id_len
            stamp, *vec = row.unpack_from(data, pos)
            pos += row.size
            try:
                gallery.enroll(uid, vec, stamp)
            except InvalidArgument as exc:
                raise FormatError(f"{source}: record {rowno}: {exc}") from exc
        return gallery

    @classmethod
    def load(cls, path: str | os.PathLike) -> Gallery:
        p = Path(path)
        try:
            data = p.read_bytes()
        except OSError as exc:
            raise FormatError(f"{p}: cannot read gallery: {exc}") from exc
        return cls.loads(data, str(p), path=p)

    @classmethod
    def open(cls, path: str | os.PathLike, dim: int = DIM) -> Gallery:
        """Load ``path`` if it exists, else start an empty gallery bound to it."""
        p = Path(path)
        return cls.load(p) if p.exists() else cls(p, dim)

    def export_csv(self, path: str | os.PathLike) -> int:
        ids, _, vecs = self._snapshot()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["ID"] + [f"Vector{i + 1}" for i in range(self.dim)])
            for uid, vec in zip(ids, vecs):
                writer.writerow([uid] + [f"{float(v):.9g}" for v in vec])
        return len(vecs)

    @classmethod
    def import_csv(cls, path: str | os.PathLike, gallery_path=None) -> Gallery:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or not rows[0] or rows[0][0] != "ID":
            raise FormatError(f"{path}:1: expected header starting with 'ID'")
        dim = len(rows[0]) - 1
        expected = ["ID"] + [f"Vector{i + 1}" for i in range(dim)]
        if rows[0] != expected or dim < 1:
            raise FormatError(f"{path}:1: header must be {','.join(expected)}")
        gallery = cls(gallery_path, dim=dim)
        for lineno, row in enumerate(rows[1:], 2):
            if len(row) != dim + 1:
                raise FormatError(f"{path}:{lineno}: expected {dim + 1} columns, found {len(row)}")
            try:
                vec = [float(v) for v in row[1:]]
                gallery.enroll(row[0], vec)
            except (ValueError, InvalidArgument) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
        return gallery

