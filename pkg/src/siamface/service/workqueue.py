"""Bounded FIFO job queue served by a fixed pool of worker threads.

``submit`` only takes a lock and appends, so request intake never waits on
the jobs themselves. Pending work counts both queued and running jobs; a
submit that would push it past ``capacity`` is refused with
:class:`Overloaded`.
"""

from __future__ import annotations

import queue
import threading
from concurrent.futures import Future
from dataclasses import dataclass
from typing import Callable

from ..errors import InvalidArgument, Overloaded


@dataclass
class QueueStats:
    received: int = 0
    completed: int = 0
    failed: int = 0
    overloaded: int = 0


class WorkQueue:
    def __init__(self, capacity: int = 64, workers: int = 1, name: str = "embed"):
        if capacity < 1 or workers < 1:
            raise InvalidArgument("capacity and workers must be >= 1")
        self.capacity = capacity
        self._jobs: queue.SimpleQueue = queue.SimpleQueue()
        self._lock = threading.Lock()
        self._pending = 0
        self._seq = 0
        self.stats = QueueStats()
        self._closed = False
        self._threads = [
            threading.Thread(target=self._work, name=f"{name}-{i}", daemon=True) for i in range(workers)
        ]
        for t in self._threads:
            t.start()

    @property
    def depth(self) -> int:
        return self._pending

    def submit(self, fn: Callable, *args, **kwargs) -> Future:
        fut: Future = Future()
        with self._lock:
            self.stats.received += 1
            if self._closed:
                self.stats.failed += 1
                fut.set_exception(RuntimeError("work queue is closed"))
                return fut
            if self._pending >= self.capacity:
                self.stats.overloaded += 1
                raise Overloaded(f"queue full ({self._pending}/{self.capacity})")
            self._pending += 1
            self._seq += 1
            fut.seq = self._seq
            self._jobs.put((fut, fn, args, kwargs))
        return fut

    def _work(self) -> None:
        while True:
            item = self._jobs.get()
            if item is None:
                return
            fut, fn, args, kwargs = item
            ok = False
            if fut.set_running_or_notify_cancel():
                try:
                    result = fn(*args, **kwargs)
                except BaseException as exc:  # noqa: BLE001 - delivered to the caller
                    fut.set_exception(exc)
                else:
                    fut.set_result(result)
                    ok = True
            with self._lock:
                self._pending -= 1
                if ok:
                    self.stats.completed += 1
                else:
                    self.stats.failed += 1

    def close(self, wait: bool = True) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
        for _ in self._threads:
            self._jobs.put(None)
        if wait:
            for t in self._threads:
                t.join()
