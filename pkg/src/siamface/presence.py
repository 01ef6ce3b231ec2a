"""Display-board presence logic: block list, display slots, wait list and timers.

The tracker is a pure state machine over (event, time) inputs. Time is an
integer millisecond clock supplied by the caller; pending timers fire only
when :meth:`PresenceTracker.tick` (or :meth:`on_candidate`, which ticks
first) is called with a time at or past their deadline.

Slot lifecycle::

    Empty -> OnScreen -> Replaceable -> Empty          (timed clear)
                      |             \\-> WaitForPush -> OnScreen   (takeover by a new uid)
                      \\-> PickedUpFromWL -> OnScreen               (wait list drained)
"""

from __future__ import annotations

import heapq
import json
import os
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol

from .errors import FormatError, InvalidArgument


class SlotStat(str, Enum):
    EMPTY = "Empty"
    ON_SCREEN = "OnScreen"
    REPLACEABLE = "Replaceable"
    PICKED_UP = "PickedUpFromWL"
    WAIT_FOR_PUSH = "WaitForPush"


LEGAL = {
    SlotStat.EMPTY: {SlotStat.ON_SCREEN},
    SlotStat.ON_SCREEN: {SlotStat.REPLACEABLE, SlotStat.PICKED_UP},
    SlotStat.REPLACEABLE: {SlotStat.EMPTY, SlotStat.WAIT_FOR_PUSH},
    SlotStat.PICKED_UP: {SlotStat.ON_SCREEN},
    SlotStat.WAIT_FOR_PUSH: {SlotStat.ON_SCREEN},
}


@dataclass(frozen=True)
class UserInfo:
    username: str = ""
    title: str = ""
    image_ref: str = ""


class UserDirectory(Protocol):
    def lookup(self, uid: str) -> UserInfo | None: ...


class MemoryDirectory:
    def __init__(self, users: dict[str, UserInfo] | None = None):
        self.users = dict(users or {})

    def lookup(self, uid: str) -> UserInfo | None:
        return self.users.get(uid)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> MemoryDirectory:
        """``{"<uid>": {"username": ..., "title": ..., "image_ref": ...}, ...}``"""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({uid: UserInfo(**fields) for uid, fields in raw.items()})


@dataclass
class PresenceConfig:
    slot_count: int = 4
    yz1: float = 0.5
    block_ms: int = 10_000
    display_ms: int = 5_000
    pickup_delay_ms: int = 500
    initial_hold_ms: int = 1_000

    def __post_init__(self):
        if self.slot_count < 1:
            raise InvalidArgument(f"slot_count must be >= 1, got {self.slot_count}")
        for name in ("block_ms", "display_ms", "pickup_delay_ms", "initial_hold_ms"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.display_ms <= self.initial_hold_ms:
            raise InvalidArgument("display_ms must exceed initial_hold_ms")


@dataclass
class Slot:
    index: int
    stat: SlotStat = SlotStat.EMPTY
    uid: str = ""
    info: UserInfo = field(default_factory=UserInfo)

    def to_dict(self) -> dict:
        return {"slot": self.index, "stat": self.stat.value, "uid": self.uid, **asdict(self.info)}


@dataclass(frozen=True)
class DisplayEvent:
    time: int
    slot: int
    uid: str
    info: UserInfo = UserInfo()

    @property
    def kind(self) -> str:
        return "show" if self.uid else "clear"

    def to_dict(self) -> dict:
        return {"time": self.time, "slot": self.slot, "uid": self.uid, "kind": self.kind, **asdict(self.info)}

    def to_line(self) -> str:
        if self.uid:
            return f"{self.time} SHOW {self.slot} {self.uid}"
        return f"{self.time} CLEAR {self.slot}"


# timer kinds
_BLOCK, _HOLD, _CLEAR, _SHOW = "block", "hold", "clear", "show"


class PresenceTracker:
    def __init__(self, config: PresenceConfig | None = None, directory: UserDirectory | None = None, start_ms: int = 0):
        self.config = config or PresenceConfig()
        self.directory = directory or MemoryDirectory()
        self.slots = [Slot(i) for i in range(self.config.slot_count)]
        self.block: dict[str, int] = {}
        self.wait_list: deque[str] = deque()
        self._timers: list[tuple[int, int, int, str, int, str]] = []
        self._seq = 0
        self._clear_token: list[int | None] = [None] * self.config.slot_count
        self.now = start_ms
        self.admitted_total = 0

    # scheduling

    def _schedule(self, at: int, kind: str, slot: int = -1, uid: str = "") -> int:
        self._seq += 1
        # same-time timers fire block expiries first, then by slot index, then by creation order
        heapq.heappush(self._timers, (at, slot, self._seq, kind, slot, uid))
        return self._seq

    def _advance(self, now: int) -> None:
        if now < self.now:
            raise InvalidArgument(f"time went backwards: {now} < {self.now}")
        self.now = now

    def pending_timers(self) -> list[tuple[int, str, int, str]]:
        return [(at, kind, slot, uid) for at, _, _, kind, slot, uid in sorted(self._timers)]

    # slot transitions

    def _set(self, slot: Slot, stat: SlotStat) -> None:
        if stat not in LEGAL[slot.stat]:
            raise AssertionError(f"illegal slot transition {slot.stat.value} -> {stat.value}")
        slot.stat = stat

    def _show(self, slot: Slot, uid: str, at: int, events: list[DisplayEvent]) -> None:
        self._set(slot, SlotStat.ON_SCREEN)
        slot.uid = uid
        slot.info = self.directory.lookup(uid) or UserInfo()
        events.append(DisplayEvent(at, slot.index, uid, slot.info))
        self._schedule(at + self.config.initial_hold_ms, _HOLD, slot.index, uid)

    def _clear_event(self, slot: Slot, at: int, events: list[DisplayEvent]) -> None:
        slot.uid = ""
        slot.info = UserInfo()
        events.append(DisplayEvent(at, slot.index, ""))

    def _fire(self, at: int, kind: str, index: int, uid: str, seq: int, events: list[DisplayEvent]) -> None:
        cfg = self.config
        if kind == _BLOCK:
            if self.block.get(uid) == at:
                del self.block[uid]
            return
        slot = self.slots[index]
        if kind == _HOLD:
            if slot.uid != uid or slot.stat is not SlotStat.ON_SCREEN:
                return
            if self.wait_list:
                waiting = self.wait_list.popleft()
                self._set(slot, SlotStat.PICKED_UP)
                self._clear_event(slot, at, events)
                self._schedule(at + cfg.pickup_delay_ms, _SHOW, index, waiting)
            else:
                self._set(slot, SlotStat.REPLACEABLE)
                self._clear_token[index] = self._schedule(at + cfg.display_ms - cfg.initial_hold_ms, _CLEAR, index, uid)
        elif kind == _CLEAR:
            if self._clear_token[index] != seq:
                return
            self._clear_token[index] = None
            if slot.uid == uid and slot.stat is SlotStat.REPLACEABLE:
                self._set(slot, SlotStat.EMPTY)
                self._clear_event(slot, at, events)
        elif kind == _SHOW:
            self._show(slot, uid, at, events)

    # public API

    def tick(self, now: int) -> list[DisplayEvent]:
        """Fire every timer due at or before ``now``, in deadline order."""
        self._advance(now)
        events: list[DisplayEvent] = []
        while self._timers and self._timers[0][0] <= now:
            at, _, seq, kind, index, uid = heapq.heappop(self._timers)
            self._fire(at, kind, index, uid, seq, events)
        return events

    def on_candidate(self, uid: str, score: float, now: int) -> list[DisplayEvent]:
        """Offer the best match of a recognition result. Higher score is better."""
        score = float(score)
        if score != score or score in (float("inf"), float("-inf")):
            raise InvalidArgument(f"score must be finite, got {score}")
        events = self.tick(now)
        if score <= self.config.yz1 or not uid or uid in self.block:
            return events
        self.admitted_total += 1
        self.block[uid] = now + self.config.block_ms
        self._schedule(now + self.config.block_ms, _BLOCK, -1, uid)

        for slot in self.slots:
            if slot.stat is SlotStat.EMPTY:
                self._show(slot, uid, now, events)
                return events
        for slot in self.slots:
            if slot.stat is SlotStat.REPLACEABLE:
                self._clear_token[slot.index] = None
                self._set(slot, SlotStat.WAIT_FOR_PUSH)
                self._clear_event(slot, now, events)
                self._schedule(now + self.config.pickup_delay_ms, _SHOW, slot.index, uid)
                return events
        self.wait_list.append(uid)
        return events

    def snapshot(self) -> list[dict]:
        return [slot.to_dict() for slot in self.slots]


# scenario files: "<t_ms> CAND <uid> <score>" / "<t_ms> TICK", optional "CONFIG key=value ..."


def parse_config_line(line: str) -> PresenceConfig:
    fields = {}
    for item in line.split()[1:]:
        key, _, value = item.partition("=")
        if key not in PresenceConfig.__dataclass_fields__:
            raise FormatError(f"unknown presence config key {key!r}")
        fields[key] = float(value) if key == "yz1" else int(value)
    return PresenceConfig(**fields)


def run_scenario(lines: Iterable[str], config: PresenceConfig | None = None, directory=None) -> list[DisplayEvent]:
    tracker = None
    events: list[DisplayEvent] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("CONFIG"):
            if tracker is not None:
                raise FormatError(f"line {lineno}: CONFIG must precede all events")
            config = parse_config_line(line)
            continue
        if tracker is None:
            tracker = PresenceTracker(config, directory)
        parts = line.split()
        try:
            t = int(parts[0])
            if parts[1] == "TICK" and len(parts) == 2:
                events += tracker.tick(t)
            elif parts[1] == "CAND" and len(parts) == 4:
                events += tracker.on_candidate(parts[2], float(parts[3]), t)
            else:
                raise ValueError(line)
        except (IndexError, ValueError) as exc:
            raise FormatError(f"line {lineno}: cannot parse {raw.strip()!r}") from exc
    return events


def read_expected(lines: Iterable[str]) -> list[str]:
    return [l.split("#", 1)[0].strip() for l in lines if l.split("#", 1)[0].strip()]
