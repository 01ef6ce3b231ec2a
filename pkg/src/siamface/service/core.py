"""Recognition service: detect, crop, embed, match, then feed the presence board."""

from __future__ import annotations

import asyncio
import json
import threading
import time
from concurrent.futures import Future
from pathlib import Path
from typing import Callable

import numpy as np

from ..data import FaceImage, parse_pgm, preprocess
from ..errors import FormatError, InvalidArgument, NoFaceError
from ..gallery import Gallery
from ..presence import DisplayEvent, MemoryDirectory, PresenceConfig, PresenceTracker, UserDirectory
from ..siamese import SiameseNetwork, embed_batch
from .config import ServiceConfig
from .vision import DetectorPlugin, PassThroughDetector, crop
from .workqueue import WorkQueue


def score_of(distance: float) -> float:
    return 1.0 / (1.0 + distance)


def monotonic_ms() -> int:
    return int(time.monotonic() * 1000)


class PresenceHub:
    """Serialises access to one tracker and fans display events out to subscribers.

    Subscribers are asyncio queues; events cross from worker threads via
    ``call_soon_threadsafe``. A background ticker fires due timers.
    """

    def __init__(self, tracker: PresenceTracker, clock: Callable[[], int] = monotonic_ms, tick_s: float = 0.05):
        self.tracker = tracker
        self.clock = clock
        self._lock = threading.Lock()
        self._subs: list[tuple[asyncio.AbstractEventLoop, asyncio.Queue]] = []
        self._tick_s = tick_s
        self._stop = threading.Event()
        self._ticker: threading.Thread | None = None

    def _now(self) -> int:
        return max(self.clock(), self.tracker.now)

    def _publish(self, events: list[DisplayEvent]) -> None:
        for loop, q in list(self._subs):
            for ev in events:
                try:
                    loop.call_soon_threadsafe(q.put_nowait, ev)
                except RuntimeError:  # loop already closed
                    self.unsubscribe(q)
                    break

    def candidate(self, uid: str, score: float) -> list[DisplayEvent]:
        with self._lock:
            events = self.tracker.on_candidate(uid, score, self._now())
            self._publish(events)
        return events

    def tick(self) -> list[DisplayEvent]:
        with self._lock:
            events = self.tracker.tick(self._now())
            self._publish(events)
        return events

    def snapshot(self) -> list[dict]:
        with self._lock:
            return self.tracker.snapshot()

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue()
        with self._lock:
            self._subs.append((asyncio.get_running_loop(), q))
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        self._subs = [(loop, s) for loop, s in self._subs if s is not q]

    def start(self) -> None:
        if self._ticker is None:
            self._stop.clear()
            self._ticker = threading.Thread(target=self._run, name="presence-ticker", daemon=True)
            self._ticker.start()

    def _run(self) -> None:
        while not self._stop.wait(self._tick_s):
            self.tick()

    def stop(self) -> None:
        self._stop.set()
        if self._ticker is not None:
            self._ticker.join()
            self._ticker = None


class RecognitionService:
    def __init__(
        self,
        net: SiameseNetwork,
        gallery: Gallery,
        config: ServiceConfig | None = None,
        detector: DetectorPlugin | None = None,
        directory: UserDirectory | None = None,
        clock: Callable[[], int] = monotonic_ms,
    ):
        self.config = config or ServiceConfig()
        self.net = net.eval()
        self.gallery = gallery
        self.detector = detector or PassThroughDetector()
        cfg = self.config
        if directory is None:
            directory = MemoryDirectory.from_json(cfg.users_path) if cfg.users_path else MemoryDirectory()
        tracker = PresenceTracker(
            PresenceConfig(slot_count=cfg.slot_count, yz1=cfg.yz1, block_ms=cfg.block_ms, display_ms=cfg.display_ms),
            directory,
            start_ms=clock(),
        )
        self.presence = PresenceHub(tracker, clock)
        self.queue = WorkQueue(cfg.queue_capacity, cfg.workers)
        self._log_lock = threading.Lock()

    @classmethod
    def from_config(cls, config: ServiceConfig) -> RecognitionService:
        from ..siamese import load_checkpoint

        return cls(load_checkpoint(config.checkpoint_path), Gallery.open(config.gallery_path), config)

    def start(self) -> None:
        # load compiled kernels now rather than inside the first request
        embed_batch(self.net, [FaceImage(np.zeros((100, 100), dtype=np.float32), "warmup")])
        self.presence.start()

    def close(self) -> None:
        self.presence.stop()
        self.queue.close()

    # embedding work; runs on queue workers

    def _faces(self, frame: bytes, source: str):
        raw = parse_pgm(frame, source)
        return [preprocess(crop(raw, box)) for box in self.detector.detect(raw)]

    def _embed(self, faces) -> np.ndarray:
        if self.config.embed_delay_ms:
            time.sleep(self.config.embed_delay_ms / 1000)
        return embed_batch(self.net, faces)

    def register(self, user_id: str, image: bytes) -> dict:
        if not isinstance(user_id, str) or not user_id:
            raise InvalidArgument("user_id must be a non-empty string")
        faces = self._faces(image, f"register:{user_id}")
        if not faces:
            raise NoFaceError("detector found no face in the image")
        vec = self._embed(faces[:1])[0]
        self.gallery.enroll(user_id, vec)
        if self.gallery.path is not None:
            self.gallery.save()
        return {"status": "registered", "embedding": [float(v) for v in vec]}

    def recognize(self, request_id: str, frames: list[bytes | None]) -> dict:
        if not request_id:
            raise InvalidArgument("request_id must be non-empty")
        if not frames:
            raise InvalidArgument("at least one frame is required")
        faces, errors = [], []
        for i, frame in enumerate(frames):
            if frame is None:
                errors.append({"frame": i, "error": "frame is not valid base64"})
                continue
            try:
                faces += self._faces(frame, f"{request_id}[{i}]")
            except (FormatError, InvalidArgument) as exc:
                errors.append({"frame": i, "error": str(exc)})
        matches = []
        if faces and len(self.gallery):
            best: dict[int, tuple[float, int, str]] = {}
            top_n = self.config.top_n
            for vec in self._embed(faces):
                for m in self.gallery.top_k(vec, top_n):
                    if m.index not in best or m.distance < best[m.index][0]:
                        best[m.index] = (m.distance, m.index, m.user_id)
            merged = sorted(best.values())[:top_n]
            matches = [{"user_id": uid, "distance": d, "score": score_of(d)} for d, _, uid in merged]
        if matches:
            self.presence.candidate(matches[0]["user_id"], matches[0]["score"])
        result = {"request_id": request_id, "matches": matches, "frame_errors": errors}
        self._log(result)
        return result

    def post_uids(self, candidates: list[tuple[str, float]]) -> list[DisplayEvent]:
        """Compatibility path: only the first candidate drives the board."""
        if not candidates:
            return []
        self._log({"request_id": "postUid", "matches": [{"user_id": u, "score": s} for u, s in candidates]})
        uid, score = candidates[0]
        return self.presence.candidate(uid, score)

    def _log(self, entry: dict) -> None:
        path = self.config.activity_log
        if not path:
            return
        line = json.dumps({"time": time.time(), "request_id": entry["request_id"], "matches": entry["matches"]})
        with self._log_lock, Path(path).open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    # intake side: only enqueue

    def submit_register(self, user_id: str, image: bytes) -> Future:
        return self.queue.submit(self.register, user_id, image)

    def submit_recognize(self, request_id: str, frames: list[bytes | None]) -> Future:
        return self.queue.submit(self.recognize, request_id, frames)
