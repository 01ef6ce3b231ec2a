"""Capture client: motion-gate a frame source and post triggered bursts to ``/recognize``."""

from __future__ import annotations

import base64
import os
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import httpx

from ..data import parse_pgm
from ..errors import SiamfaceError
from .vision import DEFAULT_TAU, motion_gate


class ServerUnavailable(SiamfaceError):
    pass


@dataclass
class CaptureConfig:
    n_frames: int = 3
    tau: float = DEFAULT_TAU
    cooldown_frames: int = 20  # 2 s at 10 frames per second
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 30.0


def directory_source(root: str | os.PathLike) -> Iterator[tuple[str, bytes]]:
    """Frames in file-name order; every ``*.pgm`` file is one frame."""
    for path in sorted(Path(root).glob("*.pgm")):
        yield str(path), path.read_bytes()


def gated_bursts(frames: Iterator[tuple[str, bytes]], cfg: CaptureConfig) -> Iterator[list[bytes]]:
    """Yield lists of up to ``n_frames`` encoded frames, one list per motion trigger."""
    prev = None
    burst: list[bytes] = []
    cooldown = 0
    for name, data in frames:
        pixels = parse_pgm(data, name).pixels
        if burst:
            burst.append(data)
            if len(burst) == cfg.n_frames:
                yield burst
                burst, cooldown = [], cfg.cooldown_frames
        elif cooldown:
            cooldown -= 1
        elif prev is not None and motion_gate(prev, pixels, cfg.tau):
            burst = [data]
            if cfg.n_frames == 1:
                yield burst
                burst, cooldown = [], cfg.cooldown_frames
        prev = pixels
    if burst:
        yield burst


def post_burst(
    client: httpx.Client,
    url: str,
    frames: list[bytes],
    cfg: CaptureConfig,
    sleep: Callable[[float], None] = time.sleep,
) -> dict:
    body = {"request_id": uuid.uuid4().hex, "frames_b64": [base64.b64encode(f).decode("ascii") for f in frames]}
    delay = cfg.backoff_s
    last = ""
    for attempt in range(cfg.retries + 1):
        if attempt:
            sleep(delay)
            delay *= 2
        try:
            resp = client.post(url.rstrip("/") + "/recognize", json=body, timeout=cfg.timeout_s)
        except httpx.TransportError as exc:
            last = f"{type(exc).__name__}: {exc}"
            continue
        if resp.status_code == 503:
            last = "server overloaded"
            continue
        resp.raise_for_status()
        return resp.json()
    raise ServerUnavailable(f"giving up after {cfg.retries + 1} attempts: {last}")


def capture(
    source: Iterator[tuple[str, bytes]],
    url: str,
    cfg: CaptureConfig | None = None,
    on_result: Callable[[dict], None] = lambda r: None,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> int:
    """Run the gate over ``source``; returns the number of requests sent."""
    cfg = cfg or CaptureConfig()
    own = client is None
    client = client or httpx.Client()
    sent = 0
    try:
        for burst in gated_bursts(source, cfg):
            on_result(post_burst(client, url, burst, cfg, sleep))
            sent += 1
    finally:
        if own:
            client.close()
    return sent
