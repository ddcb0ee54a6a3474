"""Analysis domain model layered over the item store.

Pipelines, datasets, analyses, and the expansion of an analysis into its
per-data-element execution units. Each analysis pairs the pinned version of
one pipeline with the pinned version of one dataset; expansion creates
exactly one execution element per data element of the pinned dataset.

Every state transition of an analysis or element is a single StateChanged
event, so the store's audit trail doubles as the run's state history.

Item payload shapes (all JSON-native):
    Algorithm       {"command": str}
    Pipeline        {"steps": [{"algorithm", "algorithm_version", "bindings"}]}
    Dataset         {"elements": [element ids]}
    DataElement     {"location": str, "metadata": {str: str}}
    Analysis        {"owner", "purpose", "justification", "parameters",
                     "dataset": {"id", "version"}, "pipeline": {"id", "version"},
                     "elements": [ids], "state", "result_link"}
    AnalysisElement {"analysis", "pipeline": {"id", "version"},
                     "data_element": {"id", "version"}, "step_states": [str],
                     "state", "result", "started_at", "ended_at"}
    Results         {"element", "output_location", "status", "metrics"}
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence

from .clock import isoformat_utc
from .errors import (
    EmptyDatasetError,
    EmptyLocationError,
    EmptyPipelineError,
    MissingJustificationError,
    MissingLocationError,
    MissingPurposeError,
    UnknownAlgorithmError,
    UnknownAlgorithmVersionError,
    UnknownDatasetError,
    UnknownItemError,
    UnknownPipelineError,
    UnknownUserError,
    WrongStateError,
)
from .store import Item, ItemId, ItemKind, ItemRef, ItemStore, W7Record


class AnalysisState(str, Enum):
    DRAFT = "Draft"
    SUBMITTED = "Submitted"
    RUNNING = "Running"
    COMPLETED = "Completed"
    PARTIALLY_COMPLETED = "PartiallyCompleted"
    FAILED = "Failed"


class ElementState(str, Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED = "Failed"


_ANALYSIS_TRANSITIONS = {
    AnalysisState.DRAFT: {AnalysisState.SUBMITTED},
    AnalysisState.SUBMITTED: {AnalysisState.RUNNING},
    AnalysisState.RUNNING: {
        AnalysisState.COMPLETED,
        AnalysisState.PARTIALLY_COMPLETED,
        AnalysisState.FAILED,
    },
}

_ELEMENT_TRANSITIONS = {
    ElementState.PENDING: {ElementState.RUNNING},
    ElementState.RUNNING: {ElementState.COMPLETED, ElementState.FAILED},
}


@dataclass(frozen=True)
class Step:
    """One pipeline step: a pinned algorithm plus its parameter bindings."""

    algorithm: ItemId
    algorithm_version: int
    bindings: dict[str, Any]


@dataclass(frozen=True)
class PipelineView:
    item: Item
    steps: tuple[Step, ...]


@dataclass(frozen=True)
class DatasetView:
    item: Item
    elements: tuple[ItemId, ...]


@dataclass(frozen=True)
class AnalysisView:
    item: Item
    owner: ItemId
    purpose: str
    justification: str
    parameters: dict[str, Any]
    dataset: ItemRef
    pipeline: ItemRef
    elements: tuple[ItemId, ...]
    state: AnalysisState
    result_link: str | None


@dataclass(frozen=True)
class ElementView:
    item: Item
    analysis: ItemId
    pipeline: ItemRef
    data_element: ItemRef
    step_states: tuple[str, ...]
    state: ElementState
    result: ItemId | None
    started_at: str | None
    ended_at: str | None


@dataclass(frozen=True)
class ResultsView:
    item: Item
    element: ItemId
    output_location: str
    status: str
    metrics: dict[str, Any]


def system_w7(store: ItemStore, who: str, what: str, why: str,
              which: tuple[ItemRef, ...] = (), where: str = "local",
              how: str = "analysis-service") -> W7Record:
    """Provenance record for an operation performed by this process."""
    now = store.clock.now()
    return W7Record(
        who=who, what=what, when_start=now, when_end=now,
        where=where, which=which, how=how, why=why,
    )


def _require(store: ItemStore, item_id: ItemId, kind: ItemKind,
             error: type[UnknownItemError]) -> Item:
    if not store.has_item(item_id):
        raise error(f"no {kind.value} item {item_id}")
    item = store.get_item(item_id)
    if item.kind is not kind:
        raise error(f"item {item_id} is a {item.kind.value}, not a {kind.value}")
    return item


# -- views --------------------------------------------------------------------

def get_pipeline(store: ItemStore, pipeline_id: ItemId, version: int | None = None) -> PipelineView:
    item = _require(store, pipeline_id, ItemKind.PIPELINE, UnknownPipelineError)
    if version is not None:
        item = store.get_item(pipeline_id, version)
    steps = tuple(
        Step(
            algorithm=ItemId(raw["algorithm"]),
            algorithm_version=int(raw["algorithm_version"]),
            bindings=dict(raw["bindings"]),
        )
        for raw in item.payload["steps"]
    )
    return PipelineView(item=item, steps=steps)


def get_dataset(store: ItemStore, dataset_id: ItemId, version: int | None = None) -> DatasetView:
    item = _require(store, dataset_id, ItemKind.DATASET, UnknownDatasetError)
    if version is not None:
        item = store.get_item(dataset_id, version)
    return DatasetView(item=item, elements=tuple(ItemId(e) for e in item.payload["elements"]))


def get_analysis(store: ItemStore, analysis_id: ItemId) -> AnalysisView:
    item = _require(store, analysis_id, ItemKind.ANALYSIS, UnknownItemError)
    p = item.payload
    return AnalysisView(
        item=item,
        owner=ItemId(p["owner"]),
        purpose=p["purpose"],
        justification=p["justification"],
        parameters=dict(p["parameters"]),
        dataset=ItemRef(ItemId(p["dataset"]["id"]), int(p["dataset"]["version"])),
        pipeline=ItemRef(ItemId(p["pipeline"]["id"]), int(p["pipeline"]["version"])),
        elements=tuple(ItemId(e) for e in p["elements"]),
        state=AnalysisState(p["state"]),
        result_link=p["result_link"],
    )


def get_element(store: ItemStore, element_id: ItemId) -> ElementView:
    item = _require(store, element_id, ItemKind.ANALYSIS_ELEMENT, UnknownItemError)
    p = item.payload
    return ElementView(
        item=item,
        analysis=ItemId(p["analysis"]),
        pipeline=ItemRef(ItemId(p["pipeline"]["id"]), int(p["pipeline"]["version"])),
        data_element=ItemRef(ItemId(p["data_element"]["id"]), int(p["data_element"]["version"])),
        step_states=tuple(p["step_states"]),
        state=ElementState(p["state"]),
        result=ItemId(p["result"]) if p["result"] else None,
        started_at=p["started_at"],
        ended_at=p["ended_at"],
    )


def get_results(store: ItemStore, results_id: ItemId) -> ResultsView:
    item = _require(store, results_id, ItemKind.RESULTS, UnknownItemError)
    p = item.payload
    return ResultsView(
        item=item,
        element=ItemId(p["element"]),
        output_location=p["output_location"],
        status=p["status"],
        metrics=dict(p["metrics"]),
    )


# -- registration -------------------------------------------------------------

def register_user(store: ItemStore, name: str, w7: W7Record) -> ItemId:
    user_id, _ = store.create_item(ItemKind.USER, name, {}, {}, w7)
    return user_id


def register_algorithm(store: ItemStore, name: str, command: str, w7: W7Record,
                       properties: Mapping[str, str] | None = None) -> ItemId:
    algorithm_id, _ = store.create_item(
        ItemKind.ALGORITHM, name, dict(properties or {}), {"command": command}, w7
    )
    return algorithm_id


def define_pipeline(
    store: ItemStore,
    name: str,
    steps: Sequence[Step],
    w7: W7Record,
) -> ItemId:
    """Create a pipeline item whose steps pin resolvable algorithm versions."""
    if not steps:
        raise EmptyPipelineError("a pipeline needs at least one step")
    for step in steps:
        algorithm = _require(store, step.algorithm, ItemKind.ALGORITHM, UnknownAlgorithmError)
        if step.algorithm_version < 0 or step.algorithm_version > algorithm.version:
            raise UnknownAlgorithmVersionError(
                f"algorithm {step.algorithm} has no version {step.algorithm_version}"
            )
    payload = {
        "steps": [
            {
                "algorithm": str(step.algorithm),
                "algorithm_version": step.algorithm_version,
                "bindings": dict(step.bindings),
            }
            for step in steps
        ]
    }
    pipeline_id, _ = store.create_item(ItemKind.PIPELINE, name, {}, payload, w7)
    return pipeline_id


def register_dataset(
    store: ItemStore,
    name: str,
    elements: Sequence[tuple[str, Mapping[str, str]]],
    w7: W7Record,
) -> ItemId:
    """Create one DataElement item per (location, metadata) entry plus the dataset.

    Locations are validated before anything is created, so a bad entry
    leaves the store untouched. Duplicate locations are legitimate and kept
    as distinct elements.
    """
    for location, _metadata in elements:
        if not location:
            raise EmptyLocationError("data element location must be non-empty")
    element_ids: list[ItemId] = []
    for index, (location, metadata) in enumerate(elements):
        element_id, _ = store.create_item(
            ItemKind.DATA_ELEMENT,
            f"{name}-e{index}",
            {},
            {"location": location, "metadata": dict(metadata)},
            w7,
        )
        element_ids.append(element_id)
    dataset_id, _ = store.create_item(
        ItemKind.DATASET, name, {}, {"elements": [str(e) for e in element_ids]}, w7
    )
    return dataset_id


# -- analysis lifecycle ---------------------------------------------------------

def create_analysis(
    store: ItemStore,
    owner: ItemId,
    purpose: str,
    justification: str,
    dataset: ItemId,
    pipeline: ItemId,
    parameters: Mapping[str, Any] | None = None,
) -> ItemId:
    """Create a Draft analysis with dataset and pipeline pinned at their current versions.

    The analysis item is named after its purpose, which keeps exported
    provenance comparable across stores with different internal ids.
    """
    user = _require(store, owner, ItemKind.USER, UnknownUserError)
    dataset_item = _require(store, dataset, ItemKind.DATASET, UnknownDatasetError)
    pipeline_item = _require(store, pipeline, ItemKind.PIPELINE, UnknownPipelineError)
    if not purpose:
        raise MissingPurposeError("an analysis needs a purpose")
    if not justification:
        raise MissingJustificationError("an analysis needs a justification")
    dataset_ref = ItemRef(dataset, dataset_item.version)
    pipeline_ref = ItemRef(pipeline, pipeline_item.version)
    payload = {
        "owner": str(owner),
        "purpose": purpose,
        "justification": justification,
        "parameters": dict(parameters or {}),
        "dataset": {"id": str(dataset), "version": dataset_ref.version},
        "pipeline": {"id": str(pipeline), "version": pipeline_ref.version},
        "elements": [],
        "state": AnalysisState.DRAFT.value,
        "result_link": None,
    }
    w7 = system_w7(
        store, who=user.name, what=purpose, why=justification,
        which=(dataset_ref, pipeline_ref),
    )
    analysis_id, _ = store.create_item(ItemKind.ANALYSIS, purpose, {}, payload, w7)
    return analysis_id


def set_analysis_state(
    store: ItemStore,
    analysis_id: ItemId,
    new_state: AnalysisState,
    extra_changes: Mapping[str, Any] | None = None,
    annotation: str | None = None,
) -> None:
    """Advance the analysis state machine with a single StateChanged event."""
    analysis = get_analysis(store, analysis_id)
    allowed = _ANALYSIS_TRANSITIONS.get(analysis.state, set())
    if new_state not in allowed:
        raise WrongStateError(
            f"analysis {analysis_id} cannot go {analysis.state.value} -> {new_state.value}"
        )
    owner = store.get_item(analysis.owner)
    changes = {"payload.state": new_state.value, **(extra_changes or {})}
    w7 = system_w7(
        store, who=owner.name,
        what=f"analysis state -> {new_state.value}",
        why=analysis.justification,
    )
    store.change_state(analysis_id, changes, w7, annotation=annotation)


def set_element_state(
    store: ItemStore,
    element_id: ItemId,
    new_state: ElementState,
    extra_changes: Mapping[str, Any] | None = None,
    annotation: str | None = None,
) -> None:
    element = get_element(store, element_id)
    allowed = _ELEMENT_TRANSITIONS.get(element.state, set())
    if new_state not in allowed:
        raise WrongStateError(
            f"element {element_id} cannot go {element.state.value} -> {new_state.value}"
        )
    analysis = get_analysis(store, element.analysis)
    owner = store.get_item(analysis.owner)
    changes = {"payload.state": new_state.value, **(extra_changes or {})}
    w7 = system_w7(
        store, who=owner.name,
        what=f"element state -> {new_state.value}",
        why=analysis.justification,
    )
    store.change_state(element_id, changes, w7, annotation=annotation)


def expand_analysis(store: ItemStore, analysis_id: ItemId) -> list[ItemId]:
    """Turn a Draft analysis into one Pending element per pinned data element.

    The element pairs the pinned pipeline with exactly one data element
    (pinned at its current version) and the analysis moves to Submitted.
    """
    analysis = get_analysis(store, analysis_id)
    if analysis.state is not AnalysisState.DRAFT:
        raise WrongStateError(f"analysis {analysis_id} is {analysis.state.value}, not Draft")
    dataset = get_dataset(store, analysis.dataset.item_id, analysis.dataset.version)
    if not dataset.elements:
        raise EmptyDatasetError(f"dataset {analysis.dataset.item_id} has no elements")
    pipeline = get_pipeline(store, analysis.pipeline.item_id, analysis.pipeline.version)
    owner = store.get_item(analysis.owner)
    element_ids: list[ItemId] = []
    for index, data_element_id in enumerate(dataset.elements):
        data_element = store.get_item(data_element_id)
        payload = {
            "analysis": str(analysis_id),
            "pipeline": {"id": str(analysis.pipeline.item_id),
                         "version": analysis.pipeline.version},
            "data_element": {"id": str(data_element_id), "version": data_element.version},
            "step_states": [ElementState.PENDING.value] * len(pipeline.steps),
            "state": ElementState.PENDING.value,
            "result": None,
            "started_at": None,
            "ended_at": None,
        }
        w7 = system_w7(
            store, who=owner.name,
            what=f"pair pipeline with data element {index}",
            why=analysis.justification,
            which=(ItemRef(data_element_id, data_element.version), analysis.pipeline),
        )
        element_id, _ = store.create_item(
            ItemKind.ANALYSIS_ELEMENT, f"{analysis.item.name}-e{index}", {}, payload, w7
        )
        element_ids.append(element_id)
    set_analysis_state(
        store, analysis_id, AnalysisState.SUBMITTED,
        extra_changes={"payload.elements": [str(e) for e in element_ids]},
    )
    return element_ids


def start_element(store: ItemStore, element_id: ItemId) -> None:
    """Mark a Pending element Running and stamp its start time."""
    set_element_state(
        store, element_id, ElementState.RUNNING,
        extra_changes={"payload.started_at": isoformat_utc(store.clock.now())},
    )


def attach_results(
    store: ItemStore,
    element_id: ItemId,
    output_location: str,
    status: str,
    metrics: Mapping[str, Any] | None = None,
    step_states: Sequence[str] | None = None,
) -> ItemId:
    """Create the Results item for a Running element and finalize its state.

    A success must carry an output location; a failure may leave it empty.
    The element's `result` field is set only on success, so `result present
    iff Completed` holds.
    """
    element = get_element(store, element_id)
    if element.state is not ElementState.RUNNING:
        raise WrongStateError(f"element {element_id} is {element.state.value}, not Running")
    if status not in ("success", "failure"):
        raise ValueError(f"status must be 'success' or 'failure', got {status!r}")
    if status == "success" and not output_location:
        raise MissingLocationError("successful results need an output location")
    analysis = get_analysis(store, element.analysis)
    owner = store.get_item(analysis.owner)
    w7 = system_w7(
        store, who=owner.name,
        what=f"record {status} results",
        why=analysis.justification,
        which=(element.data_element, element.pipeline),
    )
    results_id, _ = store.create_item(
        ItemKind.RESULTS,
        f"{element.item.name}-result",
        {},
        {
            "element": str(element_id),
            "output_location": output_location,
            "status": status,
            "metrics": dict(metrics or {}),
        },
        w7,
    )
    final = ElementState.COMPLETED if status == "success" else ElementState.FAILED
    extra: dict[str, Any] = {
        "payload.ended_at": isoformat_utc(store.clock.now()),
        "payload.result": str(results_id) if status == "success" else None,
    }
    if step_states is not None:
        extra["payload.step_states"] = list(step_states)
    set_element_state(store, element_id, final, extra_changes=extra)
    return results_id
