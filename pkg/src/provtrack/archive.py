"""Whole-store import/export as canonical XML.

The archive is self-contained: every item's version-0 snapshot plus the
full event log, which is all the information the store needs to replay any
item at any version. Element order is fixed (header, items by creation,
events by seq), attributes are written alphabetically, structured values
are canonical JSON, and no indentation is emitted - so equal stores export
byte-identical documents and re-export after import is byte-identical too.

Import is all-or-nothing: the document is validated (format version, log
shape, no dangling references) before anything is built.

Schema (format version 1):

    <store-archive>
      <header format-version="1"/>
      <items>
        <item created-at="..." id="..." kind="...">
          <name>...</name>
          <properties>{canonical json}</properties>
          <payload>{canonical json}</payload>
        </item>*
      </items>
      <events>
        <event item-id="..." seq="1" timestamp="..." transition="..."
               version-after="0">
          <w7 how="" what="" [when-end="..."] when-start="..." where=""
              who="..." why=""><which><ref item-id="..." version="0"/>*</which></w7>
          <change-set>[["path", old, new], ...]</change-set>
          [<annotation>...</annotation>]
        </event>*
      </events>
    </store-archive>

Timestamps are ISO-8601 UTC with microseconds.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from typing import Any

from .clock import Clock, isoformat_utc, parse_utc
from .errors import (
    DanglingReferenceError,
    NonEmptyTargetError,
    SchemaError,
    UnknownItemError,
    VersionUnsupportedError,
)
from .store import (
    Change,
    Event,
    ItemId,
    ItemKind,
    ItemRef,
    ItemSeed,
    ItemStore,
    Transition,
    W7Record,
)

FORMAT_VERSION = 1

_XML_DECLARATION = '<?xml version="1.0" encoding="UTF-8"?>\n'


def _canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _item_element(seed: ItemSeed) -> ET.Element:
    element = ET.Element("item")
    element.set("created-at", isoformat_utc(seed.created_at))
    element.set("id", str(seed.id))
    element.set("kind", seed.kind.value)
    ET.SubElement(element, "name").text = seed.name
    ET.SubElement(element, "properties").text = _canonical_json(seed.properties)
    ET.SubElement(element, "payload").text = _canonical_json(seed.payload)
    return element


def _event_element(event: Event) -> ET.Element:
    element = ET.Element("event")
    element.set("item-id", str(event.item_id))
    element.set("seq", str(event.seq))
    element.set("timestamp", isoformat_utc(event.timestamp))
    element.set("transition", event.transition.value)
    element.set("version-after", str(event.version_after))
    w7 = ET.SubElement(element, "w7")
    w7.set("how", event.w7.how)
    w7.set("what", event.w7.what)
    if event.w7.when_end is not None:
        w7.set("when-end", isoformat_utc(event.w7.when_end))
    w7.set("when-start", isoformat_utc(event.w7.when_start))
    w7.set("where", event.w7.where)
    w7.set("who", event.w7.who)
    w7.set("why", event.w7.why)
    which = ET.SubElement(w7, "which")
    for ref in event.w7.which:
        ref_element = ET.SubElement(which, "ref")
        ref_element.set("item-id", str(ref.item_id))
        ref_element.set("version", str(ref.version))
    ET.SubElement(element, "change-set").text = _canonical_json(
        [[change.path, change.old, change.new] for change in event.change_set]
    )
    if event.annotation is not None:
        ET.SubElement(element, "annotation").text = event.annotation
    return element


def _document(seeds: list[ItemSeed], events: tuple[Event, ...], root_tag: str) -> str:
    root = ET.Element(root_tag)
    header = ET.SubElement(root, "header")
    header.set("format-version", str(FORMAT_VERSION))
    items = ET.SubElement(root, "items")
    for seed in seeds:
        items.append(_item_element(seed))
    events_element = ET.SubElement(root, "events")
    for event in events:
        events_element.append(_event_element(event))
    return _XML_DECLARATION + ET.tostring(root, encoding="unicode") + "\n"


def export_all(store: ItemStore) -> str:
    """Canonical XML of the entire store; read-only and deterministic."""
    seeds = [store.initial_state(item_id) for item_id in store.item_ids()]
    return _document(seeds, store.event_log(), "store-archive")


def export_item(store: ItemStore, item_id: ItemId) -> str:
    """One item's snapshot, change sets and events, same shape as a full archive."""
    if not store.has_item(item_id):
        raise UnknownItemError(f"no item {item_id}")
    seeds = [store.initial_state(item_id)]
    events = tuple(store.history(item_id))
    return _document(seeds, events, "item-archive")


# -- import --------------------------------------------------------------------


def _text(parent: ET.Element, tag: str) -> str:
    child = parent.find(tag)
    if child is None:
        raise SchemaError(f"<{parent.tag}> is missing <{tag}>")
    return child.text or ""


def _attr(element: ET.Element, name: str) -> str:
    value = element.get(name)
    if value is None:
        raise SchemaError(f"<{element.tag}> is missing attribute {name!r}")
    return value


def _parse_seed(element: ET.Element) -> ItemSeed:
    try:
        kind = ItemKind(_attr(element, "kind"))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    properties = json.loads(_text(element, "properties"))
    payload = json.loads(_text(element, "payload"))
    if not isinstance(properties, dict) or not isinstance(payload, dict):
        raise SchemaError("item properties and payload must be JSON objects")
    return ItemSeed(
        id=ItemId(_attr(element, "id")),
        kind=kind,
        name=_text(element, "name"),
        properties=properties,
        payload=payload,
        created_at=parse_utc(_attr(element, "created-at")),
    )


def _parse_event(element: ET.Element) -> Event:
    w7_element = element.find("w7")
    if w7_element is None:
        raise SchemaError("<event> is missing <w7>")
    which_element = w7_element.find("which")
    which = tuple(
        ItemRef(ItemId(_attr(ref, "item-id")), int(_attr(ref, "version")))
        for ref in (which_element if which_element is not None else ())
    )
    when_end_raw = w7_element.get("when-end")
    w7 = W7Record(
        who=_attr(w7_element, "who"),
        what=_attr(w7_element, "what"),
        when_start=parse_utc(_attr(w7_element, "when-start")),
        when_end=parse_utc(when_end_raw) if when_end_raw is not None else None,
        where=_attr(w7_element, "where"),
        which=which,
        how=_attr(w7_element, "how"),
        why=_attr(w7_element, "why"),
    )
    raw_changes = json.loads(_text(element, "change-set"))
    if not isinstance(raw_changes, list):
        raise SchemaError("<change-set> must hold a JSON list")
    change_set = []
    for triple in raw_changes:
        if not isinstance(triple, list) or len(triple) != 3:
            raise SchemaError("each change must be a [path, old, new] triple")
        change_set.append(Change(path=triple[0], old=triple[1], new=triple[2]))
    annotation_element = element.find("annotation")
    try:
        transition = Transition(_attr(element, "transition"))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    return Event(
        seq=int(_attr(element, "seq")),
        item_id=ItemId(_attr(element, "item-id")),
        version_after=int(_attr(element, "version-after")),
        transition=transition,
        timestamp=parse_utc(_attr(element, "timestamp")),
        w7=w7,
        change_set=tuple(change_set),
        annotation=(
            (annotation_element.text or "") if annotation_element is not None else None
        ),
    )


def import_archive(
    document: str,
    into: ItemStore | None = None,
    clock: Clock | None = None,
) -> ItemStore:
    """Rebuild a store from a full archive; atomic, and only into emptiness.

    When `into` is given it must be empty; its clock is kept and its
    contents are replaced in one step. Otherwise a fresh store is returned.
    """
    if into is not None and not into.is_empty():
        raise NonEmptyTargetError("import target store already holds items or events")
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise SchemaError(f"not well-formed XML: {exc}") from exc
    if root.tag != "store-archive":
        raise SchemaError(f"expected <store-archive>, found <{root.tag}>")
    header = root.find("header")
    if header is None:
        raise SchemaError("archive has no <header>")
    version = _attr(header, "format-version")
    if version != str(FORMAT_VERSION):
        raise VersionUnsupportedError(f"archive format version {version} is unsupported")
    items_element = root.find("items")
    events_element = root.find("events")
    if items_element is None or events_element is None:
        raise SchemaError("archive needs <items> and <events> sections")

    try:
        seeds = [_parse_seed(element) for element in items_element]
        events = [_parse_event(element) for element in events_element]
    except (ValueError, json.JSONDecodeError) as exc:
        raise SchemaError(f"malformed archive value: {exc}") from exc

    known = {seed.id for seed in seeds}
    for event in events:
        if event.item_id not in known:
            raise DanglingReferenceError(
                f"event {event.seq} references missing item {event.item_id}"
            )
        for ref in event.w7.which:
            if ref.item_id not in known:
                raise DanglingReferenceError(
                    f"event {event.seq} W7 references missing item {ref.item_id}"
                )

    built = ItemStore.from_history(seeds, events, clock=clock)
    if into is None:
        return built
    with into._lock:
        if not into.is_empty():
            raise NonEmptyTargetError("import target store already holds items or events")
        into._records = built._records
        into._events = built._events
    return into
