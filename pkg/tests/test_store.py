"""Item store: creation, updates, replay, history, append-only discipline."""

from __future__ import annotations

import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provtrack import ItemKind, ItemStore, Transition, VirtualClock, W7Record
from provtrack.errors import (
    EmptyNameError,
    MissingAgentError,
    MissingJustificationError,
    UnknownItemError,
    UnknownVersionError,
)

from conftest import fold_changes, item_seed_state, w7_for


def make_store() -> ItemStore:
    return ItemStore(clock=VirtualClock(), id_seed=1)


def test_create_item_starts_at_version_zero():
    store = make_store()
    w7 = w7_for(store)
    item_id, event = store.create_item(
        ItemKind.PIPELINE, "pipe-A", {}, {"steps": []}, w7
    )
    item = store.get_item(item_id)
    assert item.version == 0
    assert event.transition is Transition.CREATED
    assert event.version_after == 0
    assert event.w7 == w7  # stored verbatim


def test_create_item_rejects_empty_name():
    store = make_store()
    with pytest.raises(EmptyNameError):
        store.create_item(ItemKind.PIPELINE, "", {}, {}, w7_for(store))


def test_create_item_rejects_missing_agent():
    store = make_store()
    w7 = w7_for(store, who="")
    with pytest.raises(MissingAgentError):
        store.create_item(ItemKind.PIPELINE, "p", {}, {}, w7)


def test_consecutive_creates_have_increasing_seq():
    store = make_store()
    _, first = store.create_item(ItemKind.USER, "u1", {}, {}, w7_for(store))
    _, second = store.create_item(ItemKind.USER, "u2", {}, {}, w7_for(store))
    assert second.seq == first.seq + 1


def test_seq_is_strictly_increasing_and_gapless_after_random_creations():
    store = make_store()
    rng = random.Random(5)
    for i in range(rng.randint(20, 40)):
        store.create_item(ItemKind.DATA_ELEMENT, f"d{i}", {}, {"location": "x"}, w7_for(store))
    seqs = [event.seq for event in store.event_log()]
    assert seqs == list(range(1, len(seqs) + 1))


def test_update_increments_version_and_logs_change_set():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "d", {"k": "v"}, {"elements": []}, w7_for(store))
    version, event = store.update_item(item_id, {"properties.k": "w"}, w7_for(store))
    assert version == 1
    assert event.transition is Transition.UPDATED
    assert event.change_set[0].path == "properties.k"
    assert event.change_set[0].old == "v"
    assert event.change_set[0].new == "w"


def test_update_requires_justification():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "d", {}, {"elements": []}, w7_for(store))
    with pytest.raises(MissingJustificationError):
        store.update_item(item_id, {"name": "e"}, w7_for(store, why=""))


def test_update_unknown_item():
    store = make_store()
    with pytest.raises(UnknownItemError):
        store.update_item("nope", {"name": "x"}, w7_for(store))


def test_k_random_updates_reach_version_k():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "d", {}, {"elements": []}, w7_for(store))
    rng = random.Random(11)
    k = rng.randint(5, 15)
    for i in range(k):
        store.update_item(item_id, {f"properties.p{rng.randint(0, 3)}": str(i)}, w7_for(store))
    assert store.get_item(item_id).version == k
    updated = [e for e in store.history(item_id) if e.transition is Transition.UPDATED]
    assert len(updated) == k


def test_get_item_historical_version_after_rename():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "a", {}, {"elements": []}, w7_for(store))
    store.update_item(item_id, {"name": "b"}, w7_for(store))
    assert store.get_item(item_id, 0).name == "a"
    assert store.get_item(item_id).name == "b"


def test_get_item_unknown_version():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "d", {}, {}, w7_for(store))
    with pytest.raises(UnknownVersionError):
        store.get_item(item_id, 1)
    with pytest.raises(UnknownVersionError):
        store.get_item(item_id, -1)


def test_every_version_matches_independent_replay_oracle():
    store = make_store()
    item_id, _ = store.create_item(
        ItemKind.ANALYSIS, "an", {"tag": "t0"}, {"state": "Draft", "params": {"a": 1}},
        w7_for(store),
    )
    rng = random.Random(3)
    mutations = [
        {"payload.state": "Submitted"},
        {"properties.tag": f"t{rng.randint(1, 9)}"},
        {"payload.params.a": rng.randint(2, 9)},
        {"name": "an-2"},
        {"payload.params.b": [1, 2, 3]},
        {"payload.params.b.1": rng.randint(10, 99)},
        {"properties.extra": "x"},
        {"payload.state": "Running"},
        {"payload.params.a": None},
        {"name": "an-3"},
    ]
    for changes in mutations:
        store.update_item(item_id, changes, w7_for(store))
    seed_state = item_seed_state(store, item_id)
    events = store.history(item_id)
    for version in range(store.get_item(item_id).version + 1):
        expected = fold_changes(seed_state, events, version)
        item = store.get_item(item_id, version)
        assert item.name == expected["name"]
        assert item.properties == expected["properties"]
        assert item.payload == expected["payload"]


def test_history_of_fresh_item_is_one_created_event():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.USER, "u", {}, {}, w7_for(store))
    events = store.history(item_id)
    assert len(events) == 1
    assert events[0].transition is Transition.CREATED


def test_history_after_three_updates():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "d", {}, {}, w7_for(store))
    for i in range(3):
        store.update_item(item_id, {f"properties.p{i}": "x"}, w7_for(store))
    events = store.history(item_id)
    assert len(events) == 4
    assert [event.version_after for event in events] == [0, 1, 2, 3]


def test_history_unknown_item():
    store = make_store()
    with pytest.raises(UnknownItemError):
        store.history("missing")


def test_job_events_do_not_bump_version():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.ANALYSIS_ELEMENT, "ae", {}, {}, w7_for(store))
    event = store.append_job_event(item_id, Transition.JOB_COMPLETED, w7_for(store))
    assert event.version_after == 0
    assert store.get_item(item_id).version == 0
    assert len(store.history(item_id)) == 2


def test_w7_rejects_reversed_time_span():
    store = make_store()
    early = store.clock.now()
    clock: VirtualClock = store.clock  # type: ignore[assignment]
    clock.advance(10)
    late = store.clock.now()
    with pytest.raises(ValueError):
        W7Record(who="a", what="w", when_start=late, when_end=early)


def test_reads_return_defensive_copies():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "d", {"k": "v"}, {"xs": [1]}, w7_for(store))
    item = store.get_item(item_id)
    item.properties["k"] = "tampered"
    item.payload["xs"].append(2)
    fresh = store.get_item(item_id)
    assert fresh.properties == {"k": "v"}
    assert fresh.payload == {"xs": [1]}


@settings(max_examples=25, deadline=None)
@given(ops=st.lists(st.integers(min_value=0, max_value=2), min_size=1, max_size=25))
def test_append_only_log_grows_by_prefix(ops):
    store = make_store()
    seeded = random.Random(7)
    ids = []
    for op in ops:
        before = store.event_log()
        if op == 0 or not ids:
            item_id, _ = store.create_item(
                ItemKind.DATA_ELEMENT, f"d{len(ids)}", {}, {"location": "l"}, w7_for(store)
            )
            ids.append(item_id)
        elif op == 1:
            store.update_item(seeded.choice(ids), {"properties.x": "1"}, w7_for(store))
        else:
            store.append_job_event(seeded.choice(ids), Transition.JOB_COMPLETED, w7_for(store))
        after = store.event_log()
        assert len(after) == len(before) + 1
        assert after[: len(before)] == before


def test_failed_update_leaves_item_and_log_untouched():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "d", {}, {"xs": [1, 2]}, w7_for(store))
    log_before = store.event_log()
    with pytest.raises((KeyError, IndexError)):
        # second change targets a missing container: nothing may stick
        store.update_item(
            item_id, {"payload.xs.0": 9, "payload.missing.deep": 1}, w7_for(store)
        )
    assert store.event_log() == log_before
    item = store.get_item(item_id)
    assert item.version == 0
    assert item.payload == {"xs": [1, 2]}


def test_concurrent_readers_never_observe_partial_state():
    store = make_store()
    item_id, _ = store.create_item(ItemKind.DATASET, "d", {}, {"n": 0}, w7_for(store))
    errors: list[Exception] = []
    stop = threading.Event()

    def writer():
        for i in range(200):
            store.update_item(item_id, {"payload.n": i + 1}, w7_for(store))
        stop.set()

    def reader():
        while not stop.is_set():
            try:
                item = store.get_item(item_id)
                assert item.payload["n"] == item.version
                store.history(item_id)
            except Exception as exc:  # pragma: no cover - only on failure
                errors.append(exc)
                return

    threads = [threading.Thread(target=writer)] + [
        threading.Thread(target=reader) for _ in range(3)
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert not errors
    assert store.get_item(item_id).version == 200
