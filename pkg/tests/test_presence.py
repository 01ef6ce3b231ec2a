import json
from collections import defaultdict, deque
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siamface.errors import FormatError, InvalidArgument
from siamface.presence import (
    LEGAL,
    MemoryDirectory,
    PresenceConfig,
    PresenceTracker,
    SlotStat,
    UserInfo,
    read_expected,
    run_scenario,
)

SCENARIOS = Path(__file__).parent / "scenarios"


@pytest.mark.parametrize("scn", sorted(SCENARIOS.glob("*.scn")), ids=lambda p: p.stem)
def test_scenario(scn):
    got = [e.to_line() for e in run_scenario(scn.read_text().splitlines())]
    assert got == read_expected(scn.with_suffix(".expected").read_text().splitlines())


def test_below_threshold_changes_nothing():
    tr = PresenceTracker()
    before = tr.snapshot()
    assert tr.on_candidate("7", 0.4, 0) == []
    assert tr.snapshot() == before and not tr.block


def test_first_candidate_shows_in_slot_zero_then_debounces():
    tr = PresenceTracker()
    events = tr.on_candidate("7", 0.9, 0)
    assert [(e.slot, e.uid, e.kind) for e in events] == [(0, "7", "show")]
    assert tr.on_candidate("7", 0.9, 10) == []
    snap = tr.snapshot()
    assert snap[0]["uid"] == "7" and snap[0]["stat"] == "OnScreen"


def test_full_board_queues_without_events():
    tr = PresenceTracker(PresenceConfig(slot_count=2))
    tr.on_candidate("a", 0.9, 0)
    tr.on_candidate("b", 0.9, 0)
    assert tr.on_candidate("c", 0.9, 100) == []
    assert list(tr.wait_list) == ["c"]


def test_replaceable_then_timed_clear():
    tr = PresenceTracker()
    tr.on_candidate("7", 0.9, 0)
    assert tr.tick(999) == []
    tr.tick(1000)
    assert tr.slots[0].stat is SlotStat.REPLACEABLE
    assert tr.tick(4999) == []
    events = tr.tick(5000)
    assert [(e.slot, e.uid) for e in events] == [(0, "")]
    assert tr.slots[0].stat is SlotStat.EMPTY


def test_fresh_snapshot_all_empty_and_pure():
    tr = PresenceTracker()
    assert all(s["stat"] == "Empty" and s["uid"] == "" for s in tr.snapshot())
    tr.on_candidate("1", 0.9, 0)
    assert tr.snapshot() == tr.snapshot()


def test_time_regression_rejected():
    tr = PresenceTracker()
    tr.tick(100)
    with pytest.raises(InvalidArgument):
        tr.tick(99)
    with pytest.raises(InvalidArgument):
        tr.on_candidate("x", 0.9, 50)


def test_non_finite_score_rejected():
    with pytest.raises(InvalidArgument):
        PresenceTracker().on_candidate("x", float("nan"), 0)


@pytest.mark.parametrize(
    "kwargs",
    [{"slot_count": 0}, {"display_ms": 1000, "initial_hold_ms": 1000}, {"block_ms": 0}, {"pickup_delay_ms": -1}],
)
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgument):
        PresenceConfig(**kwargs)


def test_user_info_from_directory_and_unknown_user(tmp_path):
    path = tmp_path / "users.json"
    path.write_text(json.dumps({"7": {"username": "Ada", "title": "Engineer", "image_ref": "ada.png"}}))
    tr = PresenceTracker(directory=MemoryDirectory.from_json(path))
    shown = tr.on_candidate("7", 0.9, 0)[0]
    assert shown.info == UserInfo("Ada", "Engineer", "ada.png")
    assert shown.to_dict()["username"] == "Ada"
    unknown = tr.on_candidate("8", 0.9, 0)[0]
    assert unknown.uid == "8" and unknown.info == UserInfo()


def test_scenario_parse_errors():
    with pytest.raises(FormatError, match="line 1"):
        run_scenario(["0 JUMP 7"])
    with pytest.raises(FormatError, match="line 2"):
        run_scenario(["0 TICK", "CONFIG slot_count=1"])
    with pytest.raises(FormatError):
        run_scenario(["CONFIG colour=blue"])


# property tests over random candidate traces

uids = st.sampled_from(["a", "b", "c", "d", "e", "f"])
step = st.tuples(st.integers(0, 1500), uids, st.floats(0.0, 1.0))
traces = st.lists(step, max_size=60)
configs = st.builds(
    PresenceConfig,
    slot_count=st.integers(1, 3),
    block_ms=st.integers(500, 6000),
    display_ms=st.integers(1200, 6000),
    pickup_delay_ms=st.integers(1, 800),
    initial_hold_ms=st.integers(100, 1100),
)


def replay(config, trace):
    tr = PresenceTracker(config)
    now, events, admissions = 0, [], []
    for gap, uid, score in trace:
        now += gap
        before = tr.admitted_total
        events += tr.on_candidate(uid, score, now)
        if tr.admitted_total > before:
            admissions.append((now, uid))
    events += tr.tick(now + 10 * (config.block_ms + config.display_ms + config.pickup_delay_ms) * (len(trace) + 1))
    return tr, events, admissions


@settings(max_examples=150, deadline=None)
@given(configs, traces)
def test_debounce_spacing(config, trace):
    _, _, admissions = replay(config, trace)
    last = {}
    for t, uid in admissions:
        if uid in last:
            assert t - last[uid] >= config.block_ms
        last[uid] = t


@settings(max_examples=150, deadline=None)
@given(configs, traces)
def test_every_admission_is_shown_once_and_board_drains(config, trace):
    tr, events, admissions = replay(config, trace)
    shows = [e for e in events if e.kind == "show"]
    assert sorted(e.uid for e in shows) == sorted(uid for _, uid in admissions)
    assert not tr.wait_list
    assert all(s.stat is SlotStat.EMPTY for s in tr.slots)
    # each showing ends in exactly one clear
    per_slot = defaultdict(list)
    for e in events:
        per_slot[e.slot].append(e.kind)
    for kinds in per_slot.values():
        assert kinds == ["show", "clear"] * (len(kinds) // 2)


@settings(max_examples=150, deadline=None)
@given(configs, traces)
def test_events_are_time_ordered_per_slot(config, trace):
    _, events, _ = replay(config, trace)
    per_slot = defaultdict(list)
    for e in events:
        per_slot[e.slot].append(e.time)
    assert all(times == sorted(times) for times in per_slot.values())


class RecordingDeque(deque):
    def __init__(self):
        super().__init__()
        self.pushed, self.popped = [], []

    def append(self, x):
        self.pushed.append(x)
        super().append(x)

    def popleft(self):
        x = super().popleft()
        self.popped.append(x)
        return x


@settings(max_examples=150, deadline=None)
@given(configs, traces)
def test_wait_list_is_fifo(config, trace):
    tr = PresenceTracker(config)
    tr.wait_list = RecordingDeque()
    now = 0
    for gap, uid, score in trace:
        now += gap
        tr.on_candidate(uid, score, now)
        assert tr.wait_list.popped == tr.wait_list.pushed[: len(tr.wait_list.popped)]
    tr.tick(now + 10**9)
    assert tr.wait_list.popped == tr.wait_list.pushed


@settings(max_examples=100, deadline=None)
@given(configs, traces)
def test_deterministic_replay(config, trace):
    _, a, _ = replay(config, trace)
    _, b, _ = replay(config, trace)
    assert a == b


ALLOWED = {
    ("Empty", "OnScreen"),
    ("OnScreen", "Replaceable"),
    ("OnScreen", "PickedUpFromWL"),
    ("Replaceable", "Empty"),
    ("Replaceable", "WaitForPush"),
    ("PickedUpFromWL", "OnScreen"),
    ("WaitForPush", "OnScreen"),
}


def test_transition_table_matches_module():
    assert {(a.value, b.value) for a, targets in LEGAL.items() for b in targets} == ALLOWED


@settings(max_examples=150, deadline=None)
@given(configs, traces)
def test_only_legal_transitions(config, trace):
    tr = PresenceTracker(config)
    seen = []
    original = tr._set

    def recording(slot, stat):
        seen.append((slot.stat.value, stat.value))
        original(slot, stat)

    tr._set = recording
    now = 0
    for gap, uid, score in trace:
        now += gap
        tr.on_candidate(uid, score, now)
        assert all(s.uid == "" for s in tr.slots if s.stat is SlotStat.EMPTY)
    tr.tick(now + 10**9)
    assert set(seen) <= ALLOWED
