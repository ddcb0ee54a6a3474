"""Mapping from a tracked analysis to a PROV document.

The owner becomes an agent; the dataset, its data elements, the pipeline,
the analysis and every result become entities; each analysis element
becomes an activity spanning its execution. Relations: hadMember ties data
elements into their dataset collection, used ties an activity to its data
element, wasAssociatedWith ties it to the agent with the pipeline as plan,
wasGeneratedBy/wasAttributedTo tie results to activity and agent, the
analysis is attributed to the agent, and derivation of each result from its
data element is stated explicitly rather than left implied.

Node names derive from item *names*, not store ids, so exports of the same
work from different stores align; version-pinned items carry a version
attribute.
"""

from __future__ import annotations

import re

from .. import model
from ..clock import isoformat_utc, parse_utc
from ..errors import UnknownItemError
from ..store import ItemId, ItemKind, ItemStore
from .document import Activity, ProvDocument, QualifiedName, RelationKind, relation_sort_key

_SAFE_LOCAL = re.compile(r"[^A-Za-z0-9_.\-]")


def _local(kind_word: str, name: str) -> QualifiedName:
    safe = _SAFE_LOCAL.sub("_", name) or "unnamed"
    return QualifiedName(prefix="an", local=f"{kind_word}-{safe}")


def _plan_entity_attributes(pipeline_name: str, version: int) -> dict[str, str]:
    """A pipeline is a plan of execution; one place encodes that choice."""
    return {
        "prov:label": pipeline_name,
        "prov:type": "prov:Plan",
        "an:version": str(version),
    }


def _analysis_entity_attributes(analysis: model.AnalysisView) -> dict[str, str]:
    """The analysis groups configuration and is attributed to its owner.

    It is deliberately an entity, not an activity: the per-element runs are
    the executions. Flip this single function to change that choice.
    """
    return {"prov:label": analysis.purpose, "an:state": analysis.state.value}


def export_analysis(store: ItemStore, analysis_id: ItemId) -> ProvDocument:
    """Build the PROV view of one analysis, whatever its current state.

    Elements that have not finished yield activities without end times;
    results exist only where runs recorded them.
    """
    if not store.has_item(analysis_id):
        raise UnknownItemError(f"no item {analysis_id}")
    analysis = model.get_analysis(store, analysis_id)
    owner = store.get_item(analysis.owner)
    dataset = model.get_dataset(store, analysis.dataset.item_id, analysis.dataset.version)
    pipeline = model.get_pipeline(store, analysis.pipeline.item_id, analysis.pipeline.version)

    doc = ProvDocument()
    agent = _local("user", owner.name)
    doc.add_agent(agent, {"prov:label": owner.name})

    dataset_entity = _local("dataset", dataset.item.name)
    doc.add_entity(
        dataset_entity,
        {"prov:label": dataset.item.name, "an:version": str(analysis.dataset.version)},
    )
    pipeline_entity = _local("pipeline", pipeline.item.name)
    doc.add_entity(
        pipeline_entity,
        _plan_entity_attributes(pipeline.item.name, analysis.pipeline.version),
    )
    analysis_entity = _local("analysis", analysis.item.name)
    doc.add_entity(analysis_entity, _analysis_entity_attributes(analysis))
    doc.add_relation(RelationKind.WAS_ATTRIBUTED_TO, analysis_entity, agent)

    # Pinned data-element versions come from the expansion pairing; before
    # expansion the current version is the only defined reading.
    pinned_versions: dict[ItemId, int] = {}
    for element_id in analysis.elements:
        element = model.get_element(store, element_id)
        pinned_versions[element.data_element.item_id] = element.data_element.version

    element_entities: dict[ItemId, QualifiedName] = {}
    for data_element_id in dataset.elements:
        version = pinned_versions.get(
            data_element_id, store.get_item(data_element_id).version
        )
        data_element = store.get_item(data_element_id, version)
        entity = _local("element", data_element.name)
        element_entities[data_element_id] = entity
        doc.add_entity(
            entity,
            {
                "prov:label": data_element.name,
                "an:location": data_element.payload["location"],
                "an:version": str(version),
            },
        )
        doc.add_relation(RelationKind.HAD_MEMBER, dataset_entity, entity)

    results_by_element: dict[ItemId, list[model.ResultsView]] = {}
    for item in store.items(ItemKind.RESULTS):
        view = model.get_results(store, item.id)
        results_by_element.setdefault(view.element, []).append(view)

    for element_id in analysis.elements:
        element = model.get_element(store, element_id)
        activity = _local("run", element.item.name)
        doc.add_activity(
            activity,
            start=parse_utc(element.started_at) if element.started_at else None,
            end=parse_utc(element.ended_at) if element.ended_at else None,
            attributes={"prov:label": element.item.name, "an:state": element.state.value},
        )
        data_entity = element_entities[element.data_element.item_id]
        doc.add_relation(RelationKind.USED, activity, data_entity)
        doc.add_relation(
            RelationKind.WAS_ASSOCIATED_WITH, activity, agent, plan=pipeline_entity
        )
        for results in results_by_element.get(element_id, ()):
            results_entity = _local("result", results.item.name)
            attributes = {"prov:label": results.item.name, "an:status": results.status}
            if results.output_location:
                attributes["an:location"] = results.output_location
            doc.add_entity(results_entity, attributes)
            doc.add_relation(RelationKind.WAS_GENERATED_BY, results_entity, activity)
            doc.add_relation(RelationKind.WAS_ATTRIBUTED_TO, results_entity, agent)
            doc.add_relation(RelationKind.WAS_DERIVED_FROM, results_entity, data_entity)
    return doc


def to_json(doc: ProvDocument) -> dict:
    """JSON mirror of a document; same information, sorted and nested."""
    def times(activity: Activity) -> dict:
        return {
            "start": isoformat_utc(activity.start) if activity.start else None,
            "end": isoformat_utc(activity.end) if activity.end else None,
            "attributes": dict(sorted(activity.attributes.items())),
        }

    return {
        "namespaces": dict(sorted(doc.namespaces.items())),
        "entities": {
            str(name): dict(sorted(attrs.items()))
            for name, attrs in sorted(doc.entities.items())
        },
        "activities": {
            str(name): times(activity) for name, activity in sorted(doc.activities.items())
        },
        "agents": {
            str(name): dict(sorted(attrs.items()))
            for name, attrs in sorted(doc.agents.items())
        },
        "relations": [
            {
                "kind": relation.kind.value,
                "subject": str(relation.subject),
                "object": str(relation.object),
                **({"plan": str(relation.plan)} if relation.plan else {}),
                "attributes": dict(sorted(relation.attributes.items())),
            }
            for relation in sorted(doc.relations, key=relation_sort_key)
        ],
    }
