"""Event-sourced, append-only store of versioned items.

Every mutation appends an immutable Event carrying a W7 provenance record
(who/what/when/where/which/how/why) and a change set; nothing is ever
deleted or rewritten. Item state at any historical version is reconstructed
by replaying change sets over the version-0 snapshot, so the event log is
the single source of truth and the audit trail is complete by construction.

Three transitions bump an item's version (Created, Updated, StateChanged);
job and workflow events attach execution provenance to an item without
touching its body, which keeps replay deltas well-defined.

Writes are serialized through one lock; reads return defensive copies and
never observe a partially applied event.
"""

from __future__ import annotations

import copy
import random
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Iterable, Mapping, NamedTuple, NewType, Sequence

from .clock import Clock, SystemClock
from .errors import (
    EmptyNameError,
    MissingAgentError,
    MissingJustificationError,
    SchemaError,
    UnknownItemError,
    UnknownVersionError,
)

ItemId = NewType("ItemId", str)

JsonValue = Any  # str | int | float | bool | None | list | dict (JSON-native)


class ItemKind(str, Enum):
    ANALYSIS = "Analysis"
    PIPELINE = "Pipeline"
    DATASET = "Dataset"
    DATA_ELEMENT = "DataElement"
    ANALYSIS_ELEMENT = "AnalysisElement"
    RESULTS = "Results"
    ALGORITHM = "Algorithm"
    USER = "User"
    QUERY = "Query"


class Transition(str, Enum):
    CREATED = "Created"
    UPDATED = "Updated"
    STATE_CHANGED = "StateChanged"
    JOB_COMPLETED = "JobCompleted"
    JOB_FAILED = "JobFailed"
    WORKFLOW_COMPLETED = "WorkflowCompleted"


#: Transitions that advance an item's version; the rest only log provenance.
VERSIONING_TRANSITIONS = frozenset(
    {Transition.CREATED, Transition.UPDATED, Transition.STATE_CHANGED}
)

JOB_TRANSITIONS = frozenset(
    {Transition.JOB_COMPLETED, Transition.JOB_FAILED, Transition.WORKFLOW_COMPLETED}
)


class ItemRef(NamedTuple):
    """A version-pinned reference to an item."""

    item_id: ItemId
    version: int


@dataclass(frozen=True)
class W7Record:
    """Who did what, when, where, with which inputs, how, and why."""

    who: str
    what: str
    when_start: datetime
    when_end: datetime | None = None
    where: str = ""
    which: tuple[ItemRef, ...] = ()
    how: str = ""
    why: str = ""

    def __post_init__(self) -> None:
        if self.when_end is not None and self.when_end < self.when_start:
            raise ValueError("when_end precedes when_start")


@dataclass(frozen=True)
class Change:
    """One (path, old value, new value) triple of a change set.

    Paths are dot-separated: ``name``, ``properties.<key>`` or
    ``payload.<key>[.<key>|.<index>...]``. Keys must not contain dots;
    numeric segments index into lists. Values must be JSON-native.
    """

    path: str
    old: JsonValue
    new: JsonValue


@dataclass(frozen=True)
class Event:
    """An immutable provenance record; `seq` totally orders the store."""

    seq: int
    item_id: ItemId
    version_after: int
    transition: Transition
    timestamp: datetime
    w7: W7Record
    change_set: tuple[Change, ...] = ()
    annotation: str | None = None


@dataclass(frozen=True)
class Item:
    """A read-only snapshot of an item at one version."""

    id: ItemId
    kind: ItemKind
    name: str
    version: int
    properties: dict[str, str]
    payload: dict[str, JsonValue]
    created_at: datetime


@dataclass(frozen=True)
class ItemSeed:
    """Version-0 state of an item, as held by archives."""

    id: ItemId
    kind: ItemKind
    name: str
    properties: dict[str, str]
    payload: dict[str, JsonValue]
    created_at: datetime


@dataclass
class _Record:
    seed: ItemSeed
    name: str
    properties: dict[str, str]
    payload: dict[str, JsonValue]
    version: int = 0
    event_seqs: list[int] = field(default_factory=list)


# -- change-set application ---------------------------------------------------

def _resolve_parent(state: dict[str, Any], path: str) -> tuple[Any, str | int]:
    """Walk to the container holding the leaf of `path`; return (parent, leaf key)."""
    segments = path.split(".")
    node: Any = state
    for segment in segments[:-1]:
        if isinstance(node, list):
            node = node[int(segment)]
        elif isinstance(node, dict):
            node = node[segment]
        else:
            raise KeyError(path)
    leaf = segments[-1]
    if isinstance(node, list):
        return node, int(leaf)
    if isinstance(node, dict):
        return node, leaf
    raise KeyError(path)


def read_path(state: dict[str, Any], path: str) -> JsonValue:
    """Value at `path`, or None when the path does not resolve."""
    try:
        parent, leaf = _resolve_parent(state, path)
        if isinstance(parent, list):
            return parent[leaf] if 0 <= leaf < len(parent) else None  # type: ignore[operator]
        return parent.get(leaf)
    except (KeyError, ValueError, IndexError):
        return None


def apply_change(state: dict[str, Any], change: Change) -> None:
    """Set `change.new` at `change.path`, mutating `state` in place."""
    parent, leaf = _resolve_parent(state, change.path)
    parent[leaf] = copy.deepcopy(change.new)


class ItemStore:
    """Append-only store of versioned, provenance-enabled items.

    Args:
        clock: timestamp source; pass a VirtualClock for deterministic runs.
        id_seed: when set, item ids are drawn from a seeded stream so two
            identically scripted stores mint identical ids.
    """

    def __init__(self, clock: Clock | None = None, id_seed: int | None = None) -> None:
        self.clock: Clock = clock or SystemClock()
        self._id_rng = random.Random(id_seed) if id_seed is not None else None
        self._lock = threading.RLock()
        self._events: list[Event] = []
        self._records: dict[ItemId, _Record] = {}

    # -- internals ------------------------------------------------------------

    def _new_id(self) -> ItemId:
        if self._id_rng is not None:
            return ItemId(str(uuid.UUID(int=self._id_rng.getrandbits(128), version=4)))
        return ItemId(str(uuid.uuid4()))

    def _next_seq(self) -> int:
        return self._events[-1].seq + 1 if self._events else 1

    def _record(self, item_id: ItemId) -> _Record:
        record = self._records.get(item_id)
        if record is None:
            raise UnknownItemError(f"no item {item_id}")
        return record

    def _item_from(self, record: _Record, name: str, properties: dict[str, str],
                   payload: dict[str, JsonValue], version: int) -> Item:
        return Item(
            id=record.seed.id,
            kind=record.seed.kind,
            name=name,
            version=version,
            properties=dict(properties),
            payload=copy.deepcopy(payload),
            created_at=record.seed.created_at,
        )

    def _mutate(
        self,
        item_id: ItemId,
        changes: Mapping[str, JsonValue],
        w7: W7Record,
        transition: Transition,
        annotation: str | None,
    ) -> tuple[int, Event]:
        if transition not in VERSIONING_TRANSITIONS or transition is Transition.CREATED:
            raise ValueError(f"not a mutation transition: {transition}")
        with self._lock:
            record = self._record(item_id)
            if not w7.who:
                raise MissingAgentError("mutations require w7.who")
            if not w7.why:
                raise MissingJustificationError("mutations require w7.why")
            # Work on a copy so a bad path mid-change-set leaves the item intact.
            state = {
                "name": record.name,
                "properties": dict(record.properties),
                "payload": copy.deepcopy(record.payload),
            }
            change_set = tuple(
                Change(path=path, old=copy.deepcopy(read_path(state, path)), new=copy.deepcopy(new))
                for path, new in changes.items()
            )
            for change in change_set:
                apply_change(state, change)
            record.name = state["name"]
            record.properties = state["properties"]
            record.payload = state["payload"]
            record.version += 1
            event = Event(
                seq=self._next_seq(),
                item_id=item_id,
                version_after=record.version,
                transition=transition,
                timestamp=self.clock.now(),
                w7=w7,
                change_set=change_set,
                annotation=annotation,
            )
            self._events.append(event)
            record.event_seqs.append(event.seq)
            return record.version, event

    # -- operations -----------------------------------------------------------

    def create_item(
        self,
        kind: ItemKind,
        name: str,
        properties: Mapping[str, str],
        payload: Mapping[str, JsonValue],
        w7: W7Record,
        annotation: str | None = None,
    ) -> tuple[ItemId, Event]:
        """Create an item at version 0 and append its Created event."""
        if not name:
            raise EmptyNameError("item name must be non-empty")
        if not w7.who:
            raise MissingAgentError("w7.who must be non-empty")
        with self._lock:
            item_id = self._new_id()
            created_at = self.clock.now()
            seed = ItemSeed(
                id=item_id,
                kind=kind,
                name=name,
                properties=dict(properties),
                payload=copy.deepcopy(dict(payload)),
                created_at=created_at,
            )
            record = _Record(
                seed=seed,
                name=name,
                properties=dict(seed.properties),
                payload=copy.deepcopy(seed.payload),
            )
            event = Event(
                seq=self._next_seq(),
                item_id=item_id,
                version_after=0,
                transition=Transition.CREATED,
                timestamp=created_at,
                w7=w7,
                annotation=annotation,
            )
            self._records[item_id] = record
            self._events.append(event)
            record.event_seqs.append(event.seq)
            return item_id, event

    def update_item(
        self,
        item_id: ItemId,
        changes: Mapping[str, JsonValue],
        w7: W7Record,
        annotation: str | None = None,
    ) -> tuple[int, Event]:
        """Apply a change set as an Updated event; returns the new version."""
        return self._mutate(item_id, changes, w7, Transition.UPDATED, annotation)

    def change_state(
        self,
        item_id: ItemId,
        changes: Mapping[str, JsonValue],
        w7: W7Record,
        annotation: str | None = None,
    ) -> tuple[int, Event]:
        """Like update_item but logged as a StateChanged transition."""
        return self._mutate(item_id, changes, w7, Transition.STATE_CHANGED, annotation)

    def append_job_event(
        self,
        item_id: ItemId,
        transition: Transition,
        w7: W7Record,
        annotation: str | None = None,
    ) -> Event:
        """Attach execution provenance to an item without versioning it."""
        if transition not in JOB_TRANSITIONS:
            raise ValueError(f"not a job transition: {transition}")
        with self._lock:
            record = self._record(item_id)
            if not w7.who:
                raise MissingAgentError("job events require w7.who")
            event = Event(
                seq=self._next_seq(),
                item_id=item_id,
                version_after=record.version,
                transition=transition,
                timestamp=self.clock.now(),
                w7=w7,
                annotation=annotation,
            )
            self._events.append(event)
            record.event_seqs.append(event.seq)
            return event

    def get_item(self, item_id: ItemId, version: int | None = None) -> Item:
        """Item state at `version` (current when omitted), rebuilt by replay."""
        with self._lock:
            record = self._record(item_id)
            if version is None or version == record.version:
                return self._item_from(
                    record, record.name, record.properties, record.payload, record.version
                )
            if version < 0 or version > record.version:
                raise UnknownVersionError(
                    f"item {item_id} has no version {version} (current {record.version})"
                )
            state = {
                "name": record.seed.name,
                "properties": dict(record.seed.properties),
                "payload": copy.deepcopy(record.seed.payload),
            }
            for seq in record.event_seqs:
                event = self._events[seq - self._events[0].seq]
                if event.transition not in VERSIONING_TRANSITIONS:
                    continue
                if event.version_after == 0 or event.version_after > version:
                    continue
                for change in event.change_set:
                    apply_change(state, change)
            return self._item_from(
                record, state["name"], state["properties"], state["payload"], version
            )

    def history(self, item_id: ItemId) -> list[Event]:
        """All events for one item, in global seq order."""
        with self._lock:
            record = self._record(item_id)
            first = self._events[0].seq
            return [self._events[seq - first] for seq in record.event_seqs]

    # -- introspection ----------------------------------------------------------

    def has_item(self, item_id: ItemId) -> bool:
        with self._lock:
            return item_id in self._records

    def item_ids(self) -> list[ItemId]:
        """All item ids in creation order."""
        with self._lock:
            return list(self._records)

    def items(self, kind: ItemKind | None = None) -> list[Item]:
        """Current snapshots of all items (optionally one kind), creation order."""
        with self._lock:
            return [
                self._item_from(r, r.name, r.properties, r.payload, r.version)
                for r in self._records.values()
                if kind is None or r.seed.kind is kind
            ]

    def event_log(self) -> tuple[Event, ...]:
        """The full append-only event log in seq order."""
        with self._lock:
            return tuple(self._events)

    def initial_state(self, item_id: ItemId) -> ItemSeed:
        """The version-0 snapshot an archive needs to replay this item."""
        with self._lock:
            seed = self._record(item_id).seed
            return ItemSeed(
                id=seed.id,
                kind=seed.kind,
                name=seed.name,
                properties=dict(seed.properties),
                payload=copy.deepcopy(seed.payload),
                created_at=seed.created_at,
            )

    def is_empty(self) -> bool:
        with self._lock:
            return not self._records and not self._events

    # -- reconstruction ---------------------------------------------------------

    @classmethod
    def from_history(
        cls,
        seeds: Sequence[ItemSeed],
        events: Iterable[Event],
        clock: Clock | None = None,
    ) -> "ItemStore":
        """Rebuild a store from version-0 snapshots plus the full event log.

        Validates the log shape up front (strictly increasing gapless seq
        starting at 1, every event pointing at a known item) and replays
        versioning change sets, so the result is observationally identical
        to the store that produced the history.
        """
        event_list = sorted(events, key=lambda e: e.seq)
        for position, event in enumerate(event_list, start=1):
            if event.seq != position:
                raise SchemaError(
                    f"event log has seq {event.seq} at position {position}; "
                    "expected a gapless sequence from 1"
                )
        store = cls(clock=clock)
        for seed in seeds:
            store._records[seed.id] = _Record(
                seed=seed,
                name=seed.name,
                properties=dict(seed.properties),
                payload=copy.deepcopy(seed.payload),
            )
        for event in event_list:
            record = store._records.get(event.item_id)
            if record is None:
                raise SchemaError(f"event {event.seq} references unknown item {event.item_id}")
            store._events.append(event)
            record.event_seqs.append(event.seq)
            if event.transition in VERSIONING_TRANSITIONS and event.version_after > 0:
                state = {
                    "name": record.name,
                    "properties": record.properties,
                    "payload": record.payload,
                }
                for change in event.change_set:
                    apply_change(state, change)
                record.name = state["name"]
                record.version = event.version_after
        return store
