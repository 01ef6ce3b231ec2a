"""Service configuration: a flat ``key = value`` text file."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import FormatError, InvalidArgument

CONFIG_ENV = "SIAMFACE_CONFIG"


@dataclass
class ServiceConfig:
    gallery_path: str = "gallery.sfg"
    checkpoint_path: str = "model.ckpt"
    host: str = "127.0.0.1"
    port: int = 8000
    top_n: int = 3
    n_max: int = 3
    queue_capacity: int = 64
    workers: int = 1
    activity_log: str = ""
    users_path: str = ""
    # presence board
    yz1: float = 0.5
    slot_count: int = 4
    block_ms: int = 10_000
    display_ms: int = 5_000
    # test hook: extra latency added to every embedding call
    embed_delay_ms: float = 0.0

    def __post_init__(self):
        for name in ("top_n", "n_max", "queue_capacity", "workers"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be >= 1")
        if self.embed_delay_ms < 0:
            raise InvalidArgument("embed_delay_ms must be >= 0")


def parse_config(text: str, source: str = "<config>") -> ServiceConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string("[service]\n" + text, source=source)
    except configparser.Error as exc:
        raise FormatError(f"{source}: {exc}") from exc
    types = {f.name: f.type for f in fields(ServiceConfig)}
    values = {}
    for key, raw in parser["service"].items():
        if key not in types:
            raise FormatError(f"{source}: unknown key {key!r}")
        kind = {"int": int, "float": float}.get(types[key], str)
        try:
            values[key] = kind(raw)
        except ValueError as exc:
            raise FormatError(f"{source}: {key}: cannot parse {raw!r}") from exc
    try:
        return ServiceConfig(**values)
    except InvalidArgument as exc:
        raise FormatError(f"{source}: {exc}") from exc


def load_config(path: str | os.PathLike | None = None) -> ServiceConfig:
    """Read ``path``, else ``$SIAMFACE_CONFIG``, else return defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return ServiceConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{p}: cannot read config: {exc}") from exc
    return parse_config(text, str(p))
