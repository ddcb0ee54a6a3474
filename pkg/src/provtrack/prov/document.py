"""In-memory PROV document model: entities, activities, agents, relations.

Documents are plain data. Invariants (no dangling relation endpoints,
activity start <= end, plans only on association edges, declared prefixes)
are *checked* by `validate`, which reports findings instead of raising, so
malformed documents can be inspected and diffed rather than rejected.

Structural equality ignores insertion order: node maps compare as dicts and
relations compare as multisets under a canonical sort.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Iterable

PROV_NS = "http://www.w3.org/ns/prov#"
ANALYSIS_NS = "http://example.org/analysis#"

DEFAULT_NAMESPACES = {"an": ANALYSIS_NS, "prov": PROV_NS}


@dataclass(frozen=True, order=True)
class QualifiedName:
    prefix: str
    local: str

    def __str__(self) -> str:
        return f"{self.prefix}:{self.local}"


class RelationKind(str, Enum):
    USED = "used"
    WAS_GENERATED_BY = "wasGeneratedBy"
    WAS_ASSOCIATED_WITH = "wasAssociatedWith"
    WAS_ATTRIBUTED_TO = "wasAttributedTo"
    HAD_MEMBER = "hadMember"
    WAS_DERIVED_FROM = "wasDerivedFrom"


#: Canonical statement order for serialization and sorting.
RELATION_ORDER = {kind: index for index, kind in enumerate(RelationKind)}


@dataclass(frozen=True)
class Relation:
    kind: RelationKind
    subject: QualifiedName
    object: QualifiedName
    plan: QualifiedName | None = None
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass
class Activity:
    start: datetime | None = None
    end: datetime | None = None
    attributes: dict[str, str] = field(default_factory=dict)


def relation_sort_key(relation: Relation) -> tuple:
    return (
        RELATION_ORDER[relation.kind],
        str(relation.subject),
        str(relation.object),
        str(relation.plan) if relation.plan else "",
        tuple(sorted(relation.attributes.items())),
    )


@dataclass(eq=False)
class ProvDocument:
    namespaces: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_NAMESPACES))
    entities: dict[QualifiedName, dict[str, str]] = field(default_factory=dict)
    activities: dict[QualifiedName, Activity] = field(default_factory=dict)
    agents: dict[QualifiedName, dict[str, str]] = field(default_factory=dict)
    relations: list[Relation] = field(default_factory=list)

    # Relations are compared as multisets: statement order is presentation,
    # not meaning.
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProvDocument):
            return NotImplemented
        return (
            self.namespaces == other.namespaces
            and self.entities == other.entities
            and self.activities == other.activities
            and self.agents == other.agents
            and sorted(self.relations, key=relation_sort_key)
            == sorted(other.relations, key=relation_sort_key)
        )

    def add_entity(self, name: QualifiedName, attributes: dict[str, str] | None = None) -> None:
        self.entities[name] = dict(attributes or {})

    def add_activity(
        self,
        name: QualifiedName,
        start: datetime | None = None,
        end: datetime | None = None,
        attributes: dict[str, str] | None = None,
    ) -> None:
        self.activities[name] = Activity(start=start, end=end, attributes=dict(attributes or {}))

    def add_agent(self, name: QualifiedName, attributes: dict[str, str] | None = None) -> None:
        self.agents[name] = dict(attributes or {})

    def add_relation(
        self,
        kind: RelationKind,
        subject: QualifiedName,
        object: QualifiedName,
        plan: QualifiedName | None = None,
        attributes: dict[str, str] | None = None,
    ) -> None:
        self.relations.append(
            Relation(kind=kind, subject=subject, object=object, plan=plan,
                     attributes=dict(attributes or {}))
        )

    def node_names(self) -> set[QualifiedName]:
        return set(self.entities) | set(self.activities) | set(self.agents)


# -- validation ----------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    code: str  # DanglingReference | TemporalOrder | MisplacedPlan | UndeclaredPrefix
    subject: str
    message: str


def _undeclared(doc: ProvDocument, names: Iterable[QualifiedName]) -> set[str]:
    return {name.prefix for name in names if name.prefix not in doc.namespaces}


def validate(doc: ProvDocument) -> list[Finding]:
    """All invariant violations in the document; empty means well-formed."""
    findings: list[Finding] = []
    nodes = doc.node_names()

    for relation in sorted(doc.relations, key=relation_sort_key):
        label = f"{relation.kind.value}({relation.subject}, {relation.object})"
        for endpoint in (relation.subject, relation.object, relation.plan):
            if endpoint is not None and endpoint not in nodes:
                findings.append(
                    Finding("DanglingReference", label,
                            f"{endpoint} is not declared in this document")
                )
        if relation.plan is not None and relation.kind is not RelationKind.WAS_ASSOCIATED_WITH:
            findings.append(
                Finding("MisplacedPlan", label,
                        f"plan given on a {relation.kind.value} relation")
            )

    for name, activity in sorted(doc.activities.items()):
        if activity.start is not None and activity.end is not None \
                and activity.end < activity.start:
            findings.append(
                Finding("TemporalOrder", str(name), "activity ends before it starts")
            )

    referenced: list[QualifiedName] = list(nodes)
    for relation in doc.relations:
        referenced.extend(n for n in (relation.subject, relation.object, relation.plan) if n)
    attr_keys: set[str] = set()
    for attrs in doc.entities.values():
        attr_keys.update(attrs)
    for activity in doc.activities.values():
        attr_keys.update(activity.attributes)
    for attrs in doc.agents.values():
        attr_keys.update(attrs)
    for relation in doc.relations:
        attr_keys.update(relation.attributes)
    key_prefixes = {key.split(":", 1)[0] for key in attr_keys if ":" in key}
    bad_prefixes = _undeclared(doc, referenced) | {
        prefix for prefix in key_prefixes if prefix not in doc.namespaces
    }
    for prefix in sorted(bad_prefixes):
        findings.append(
            Finding("UndeclaredPrefix", prefix, f"prefix '{prefix}' has no namespace")
        )
    return findings


# -- diffing ---------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeMismatch:
    node: QualifiedName
    key: str
    in_a: str | None
    in_b: str | None


@dataclass(frozen=True)
class ProvDiff:
    nodes_only_in_a: tuple[tuple[str, QualifiedName], ...]
    nodes_only_in_b: tuple[tuple[str, QualifiedName], ...]
    relations_only_in_a: tuple[Relation, ...]
    relations_only_in_b: tuple[Relation, ...]
    attribute_mismatches: tuple[AttributeMismatch, ...]

    def is_empty(self) -> bool:
        return not (
            self.nodes_only_in_a
            or self.nodes_only_in_b
            or self.relations_only_in_a
            or self.relations_only_in_b
            or self.attribute_mismatches
        )


def _node_table(doc: ProvDocument) -> dict[tuple[str, str], tuple[QualifiedName, dict[str, str]]]:
    """Nodes keyed by (node class, local name); prefixes do not affect alignment."""
    table: dict[tuple[str, str], tuple[QualifiedName, dict[str, str]]] = {}
    for name, attrs in doc.entities.items():
        table[("entity", name.local)] = (name, dict(attrs))
    for name, activity in doc.activities.items():
        attrs = dict(activity.attributes)
        # Times take part in comparison as pseudo-attributes.
        attrs["prov:startTime"] = activity.start.isoformat() if activity.start else ""
        attrs["prov:endTime"] = activity.end.isoformat() if activity.end else ""
        table[("activity", name.local)] = (name, attrs)
    for name, attrs in doc.agents.items():
        table[("agent", name.local)] = (name, dict(attrs))
    return table


def _relation_key(relation: Relation) -> tuple:
    return (
        relation.kind.value,
        relation.subject.local,
        relation.object.local,
        relation.plan.local if relation.plan else None,
        tuple(sorted(relation.attributes.items())),
    )


def diff(a: ProvDocument, b: ProvDocument) -> ProvDiff:
    """Structural difference after aligning nodes by (class, local name)."""
    table_a, table_b = _node_table(a), _node_table(b)
    only_a = sorted(set(table_a) - set(table_b))
    only_b = sorted(set(table_b) - set(table_a))

    mismatches: list[AttributeMismatch] = []
    for key in sorted(set(table_a) & set(table_b)):
        name_a, attrs_a = table_a[key]
        _name_b, attrs_b = table_b[key]
        for attr in sorted(set(attrs_a) | set(attrs_b)):
            if attrs_a.get(attr) != attrs_b.get(attr):
                mismatches.append(
                    AttributeMismatch(
                        node=name_a, key=attr,
                        in_a=attrs_a.get(attr), in_b=attrs_b.get(attr),
                    )
                )

    def multiset_excess(left: ProvDocument, right: ProvDocument) -> list[Relation]:
        budget = Counter(_relation_key(r) for r in right.relations)
        excess = []
        for relation in sorted(left.relations, key=relation_sort_key):
            key = _relation_key(relation)
            if budget[key] > 0:
                budget[key] -= 1
            else:
                excess.append(relation)
        return excess

    rel_only_a = multiset_excess(a, b)
    rel_only_b = multiset_excess(b, a)
    return ProvDiff(
        nodes_only_in_a=tuple((cls, table_a[(cls, local)][0]) for cls, local in only_a),
        nodes_only_in_b=tuple((cls, table_b[(cls, local)][0]) for cls, local in only_b),
        relations_only_in_a=tuple(rel_only_a),
        relations_only_in_b=tuple(rel_only_b),
        attribute_mismatches=tuple(mismatches),
    )
