"""Lineage and catalog queries over the store.

Queries are conjunctive: an optional kind filter, property predicates
(eq/neq/contains/range over dot paths into name, properties and payload)
and an optional lineage clause tying items to a dataset, algorithm, user or
analysis. Evaluation is a read-only scan over current versions in creation
order - except lineage, which reads the versions *pinned* at submission, so
"which dataset versions met this algorithm" keeps its answer when items
move on.

Queries serialize to a small JSON object and can themselves be saved as
store items, making query re-use auditable like everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Mapping

from . import model
from .errors import (
    MalformedQueryError,
    NeverSubmittedError,
    UnknownAlgorithmError,
    UnknownItemError,
)
from .store import (
    Event,
    Item,
    ItemId,
    ItemKind,
    ItemStore,
    Transition,
    read_path,
)


class Operator(str, Enum):
    EQ = "eq"
    NEQ = "neq"
    CONTAINS = "contains"
    RANGE = "range"


class LineageRelation(str, Enum):
    USED_DATASET = "used-dataset"
    USED_ALGORITHM = "used-algorithm"
    RAN_BY = "ran-by"
    PRODUCED = "produced"


@dataclass(frozen=True)
class Predicate:
    path: str
    op: Operator
    value: Any


@dataclass(frozen=True)
class LineageClause:
    relation: LineageRelation
    target: ItemId


@dataclass(frozen=True)
class Query:
    kind: ItemKind | None = None
    predicates: tuple[Predicate, ...] = ()
    lineage: LineageClause | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value if self.kind else None,
            "predicates": [
                {"path": p.path, "op": p.op.value, "value": p.value}
                for p in self.predicates
            ],
            "lineage": (
                {"relation": self.lineage.relation.value, "target": str(self.lineage.target)}
                if self.lineage
                else None
            ),
        }

    @classmethod
    def from_json(cls, raw: Mapping[str, Any]) -> "Query":
        try:
            kind = ItemKind(raw["kind"]) if raw.get("kind") else None
            predicates = tuple(
                Predicate(path=p["path"], op=Operator(p["op"]), value=p["value"])
                for p in raw.get("predicates", ())
            )
            lineage_raw = raw.get("lineage")
            lineage = (
                LineageClause(
                    relation=LineageRelation(lineage_raw["relation"]),
                    target=ItemId(lineage_raw["target"]),
                )
                if lineage_raw
                else None
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedQueryError(f"bad query object: {exc}") from exc
        return cls(kind=kind, predicates=predicates, lineage=lineage)


# -- predicate evaluation -----------------------------------------------------

def _item_value(item: Item, path: str) -> Any:
    state = {"name": item.name, "properties": item.properties, "payload": item.payload}
    return read_path(state, path)


def _matches(item: Item, predicate: Predicate) -> bool:
    value = _item_value(item, predicate.path)
    if predicate.op is Operator.EQ:
        return value == predicate.value
    if predicate.op is Operator.NEQ:
        return value != predicate.value
    if predicate.op is Operator.CONTAINS:
        if isinstance(value, str) and isinstance(predicate.value, str):
            return predicate.value in value
        if isinstance(value, list):
            return predicate.value in value
        return False
    # range: inclusive [lo, hi] over mutually comparable values
    bounds = predicate.value
    if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
        raise MalformedQueryError("range predicates need a [low, high] pair")
    low, high = bounds
    try:
        return low <= value <= high
    except TypeError:
        return False


def _analysis_matches_lineage(store: ItemStore, analysis: model.AnalysisView,
                              clause: LineageClause) -> bool:
    if clause.relation is LineageRelation.USED_DATASET:
        return analysis.dataset.item_id == clause.target
    if clause.relation is LineageRelation.RAN_BY:
        return analysis.owner == clause.target
    if clause.relation is LineageRelation.USED_ALGORITHM:
        pipeline = model.get_pipeline(
            store, analysis.pipeline.item_id, analysis.pipeline.version
        )
        return any(step.algorithm == clause.target for step in pipeline.steps)
    return False


def _lineage_filter(store: ItemStore, item: Item, clause: LineageClause) -> bool:
    """Lineage semantics per item kind.

    used-dataset / used-algorithm / ran-by select analyses tied to the
    target; produced selects results generated under the target analysis.
    """
    if clause.relation is LineageRelation.PRODUCED:
        if item.kind is not ItemKind.RESULTS:
            return False
        results = model.get_results(store, item.id)
        element = model.get_element(store, results.element)
        return element.analysis == clause.target
    if item.kind is not ItemKind.ANALYSIS:
        return False
    return _analysis_matches_lineage(store, model.get_analysis(store, item.id), clause)


def find_items(store: ItemStore, query: Query) -> list[tuple[ItemId, int]]:
    """All current-version items satisfying every part of the query."""
    if query.kind is None and not query.predicates and query.lineage is None:
        raise MalformedQueryError("query needs a kind, a predicate, or a lineage clause")
    hits: list[tuple[ItemId, int]] = []
    for item in store.items():
        if query.kind is not None and item.kind is not query.kind:
            continue
        if not all(_matches(item, predicate) for predicate in query.predicates):
            continue
        if query.lineage is not None and not _lineage_filter(store, item, query.lineage):
            continue
        hits.append((item.id, item.version))
    return hits


# -- flagship lineage questions -------------------------------------------------

@dataclass(frozen=True)
class WhoRan:
    agent: str
    when_start: datetime | None
    when_end: datetime | None
    why: str


def who_ran(store: ItemStore, analysis_id: ItemId) -> WhoRan:
    """Who submitted an analysis, when its run spanned, and why."""
    analysis = model.get_analysis(store, analysis_id)
    if analysis.state is model.AnalysisState.DRAFT:
        raise NeverSubmittedError(f"analysis {analysis_id} was never submitted")
    created = store.history(analysis_id)[0]
    when_start = when_end = None
    first_job: Event | None = None
    for element_id in analysis.elements:
        for event in store.history(element_id):
            if event.transition in (Transition.JOB_COMPLETED, Transition.JOB_FAILED):
                if first_job is None or event.seq < first_job.seq:
                    first_job = event
                break
    if first_job is not None:
        when_start = first_job.w7.when_start
    for event in store.history(analysis_id):
        if event.transition is Transition.WORKFLOW_COMPLETED:
            when_end = event.w7.when_end
            break
    return WhoRan(
        agent=created.w7.who,
        when_start=when_start,
        when_end=when_end,
        why=analysis.justification,
    )


def used_with(store: ItemStore, algorithm_id: ItemId) -> set[tuple[ItemId, int]]:
    """Pinned (dataset, version) pairs of every analysis using an algorithm."""
    if not store.has_item(algorithm_id):
        raise UnknownItemError(f"no item {algorithm_id}")
    if store.get_item(algorithm_id).kind is not ItemKind.ALGORITHM:
        raise UnknownAlgorithmError(f"item {algorithm_id} is not an Algorithm")
    pairs: set[tuple[ItemId, int]] = set()
    for item in store.items(ItemKind.ANALYSIS):
        analysis = model.get_analysis(store, item.id)
        pipeline = model.get_pipeline(
            store, analysis.pipeline.item_id, analysis.pipeline.version
        )
        if any(step.algorithm == algorithm_id for step in pipeline.steps):
            pairs.add((analysis.dataset.item_id, analysis.dataset.version))
    return pairs


# -- full lineage of one item -----------------------------------------------------

@dataclass(frozen=True)
class ChainEntry:
    role: str
    item_id: ItemId
    version: int | None
    name: str


@dataclass(frozen=True)
class LineageReport:
    item_id: ItemId
    events: tuple[Event, ...]
    chain: tuple[ChainEntry, ...]


def provenance_of(store: ItemStore, item_id: ItemId) -> LineageReport:
    """An item's event trail; for results, also its full derivation chain."""
    events = tuple(store.history(item_id))
    item = store.get_item(item_id)
    chain: tuple[ChainEntry, ...] = ()
    if item.kind is ItemKind.RESULTS:
        results = model.get_results(store, item_id)
        element = model.get_element(store, results.element)
        analysis = model.get_analysis(store, element.analysis)
        owner = store.get_item(analysis.owner)
        data_element = store.get_item(
            element.data_element.item_id, element.data_element.version
        )
        pipeline = store.get_item(element.pipeline.item_id, element.pipeline.version)
        chain = (
            ChainEntry("analysis_element", element.item.id, element.item.version,
                       element.item.name),
            ChainEntry("data_element", data_element.id, element.data_element.version,
                       data_element.name),
            ChainEntry("pipeline", pipeline.id, element.pipeline.version, pipeline.name),
            ChainEntry("analysis", analysis.item.id, analysis.item.version,
                       analysis.item.name),
            ChainEntry("user", owner.id, None, owner.name),
        )
    return LineageReport(item_id=item_id, events=events, chain=chain)


# -- saved queries -----------------------------------------------------------------

def save_query(store: ItemStore, name: str, query: Query, w7) -> ItemId:
    """Persist a query as a store item so its reuse is audit-tracked."""
    query_id, _ = store.create_item(ItemKind.QUERY, name, {}, query.to_json(), w7)
    return query_id


def load_query(store: ItemStore, query_id: ItemId) -> Query:
    item = store.get_item(query_id)
    if item.kind is not ItemKind.QUERY:
        raise UnknownItemError(f"item {query_id} is not a Query")
    return Query.from_json(item.payload)
