"""PROV-N text: canonical serialization, parsing, and the round-trip law."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provtrack.errors import (
    InvalidDocumentError,
    ProvNSyntaxError,
    UnknownPrefixError,
    UnsupportedStatementError,
)
from provtrack.prov import (
    ProvDocument,
    QualifiedName,
    Relation,
    RelationKind,
    parse_provn,
    serialize_provn,
)


def qn(local: str, prefix: str = "an") -> QualifiedName:
    return QualifiedName(prefix=prefix, local=local)


def test_empty_document_serializes_to_default_namespaces_only():
    text = serialize_provn(ProvDocument())
    lines = text.splitlines()
    assert lines[0] == "document"
    assert lines[-1] == "endDocument"
    assert [line.strip() for line in lines[1:-1]] == [
        "prefix an <http://example.org/analysis#>",
        "prefix prov <http://www.w3.org/ns/prov#>",
    ]
    assert parse_provn(text) == ProvDocument()


def test_single_entity_statement_shape():
    doc = ProvDocument()
    doc.add_entity(qn("r1", prefix="an"))
    assert "entity(an:r1)" in serialize_provn(doc)


def test_serialization_is_deterministic():
    doc = ProvDocument()
    doc.add_entity(qn("b"), {"an:k2": "v2", "an:k1": "v1"})
    doc.add_entity(qn("a"))
    doc.add_agent(qn("u"))
    doc.add_activity(qn("act"), start=datetime(2001, 2, 3, tzinfo=timezone.utc))
    doc.add_relation(RelationKind.USED, qn("act"), qn("a"))
    doc.add_relation(RelationKind.USED, qn("act"), qn("b"))
    assert serialize_provn(doc) == serialize_provn(doc)


def test_statement_order_does_not_change_canonical_text():
    doc_a = ProvDocument()
    doc_a.add_entity(qn("x"))
    doc_a.add_entity(qn("y"))
    doc_a.add_activity(qn("act"))
    doc_a.add_relation(RelationKind.USED, qn("act"), qn("x"))
    doc_a.add_relation(RelationKind.USED, qn("act"), qn("y"))
    doc_b = ProvDocument()
    doc_b.add_entity(qn("y"))
    doc_b.add_entity(qn("x"))
    doc_b.add_activity(qn("act"))
    doc_b.add_relation(RelationKind.USED, qn("act"), qn("y"))
    doc_b.add_relation(RelationKind.USED, qn("act"), qn("x"))
    assert serialize_provn(doc_a) == serialize_provn(doc_b)


def test_round_trip_preserves_times_and_attributes():
    doc = ProvDocument()
    doc.add_entity(qn("data"), {"an:location": 'quoted "loc"', "prov:label": "line\nbreak"})
    doc.add_agent(qn("user"), {"prov:label": "tab\there \\ slash"})
    doc.add_activity(
        qn("run"),
        start=datetime(2000, 5, 6, 7, 8, 9, 123456, tzinfo=timezone.utc),
        end=None,
        attributes={"an:state": "Running"},
    )
    doc.add_relation(RelationKind.USED, qn("run"), qn("data"), attributes={"an:note": "x"})
    doc.add_relation(RelationKind.WAS_ASSOCIATED_WITH, qn("run"), qn("user"))
    parsed = parse_provn(serialize_provn(doc))
    assert parsed == doc
    assert parsed.activities[qn("run")].start == doc.activities[qn("run")].start
    assert parsed.activities[qn("run")].end is None


def test_parse_reports_unknown_prefix():
    text = 'document\n  prefix an <http://example.org/analysis#>\n  used(a:x, an:y)\nendDocument\n'
    with pytest.raises(UnknownPrefixError):
        parse_provn(text)


def test_parse_rejects_statements_outside_subset_by_name():
    text = (
        "document\n"
        "  prefix an <http://example.org/analysis#>\n"
        "  wasInformedBy(an:a, an:b)\n"
        "endDocument\n"
    )
    with pytest.raises(UnsupportedStatementError) as excinfo:
        parse_provn(text)
    assert excinfo.value.statement == "wasInformedBy"


def test_parse_syntax_error_carries_position():
    text = "document\n  prefix an <http://x#>\n  entity(an:x\nendDocument\n"
    with pytest.raises(ProvNSyntaxError) as excinfo:
        parse_provn(text)
    assert excinfo.value.line >= 3


def test_parse_rejects_missing_end():
    with pytest.raises(ProvNSyntaxError):
        parse_provn("document\n  prefix an <http://x#>\n")


def test_parse_rejects_trailing_garbage():
    with pytest.raises(ProvNSyntaxError):
        parse_provn("document\nendDocument\nextra\n")


def test_serialize_rejects_dangling_reference():
    doc = ProvDocument()
    doc.add_relation(RelationKind.USED, qn("a"), qn("b"))
    with pytest.raises(InvalidDocumentError):
        serialize_provn(doc)


def test_serialize_rejects_had_member_attributes():
    doc = ProvDocument()
    doc.add_entity(qn("c"))
    doc.add_entity(qn("m"))
    doc.relations.append(
        Relation(RelationKind.HAD_MEMBER, qn("c"), qn("m"), attributes={"an:x": "1"})
    )
    with pytest.raises(InvalidDocumentError):
        serialize_provn(doc)


# -- randomized round trip ------------------------------------------------------

_LOCALS = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789_.-", min_size=1, max_size=12
).filter(lambda s: s[0] not in ".-")

_ATTR_KEYS = st.sampled_from(
    ["prov:label", "prov:type", "an:version", "an:state", "an:location", "an:note"]
)
_ATTR_VALUES = st.text(min_size=0, max_size=20)
_ATTRS = st.dictionaries(_ATTR_KEYS, _ATTR_VALUES, max_size=3)

_TIMES = st.datetimes(
    min_value=datetime(1990, 1, 1), max_value=datetime(2100, 1, 1)
).map(lambda dt: dt.replace(tzinfo=timezone.utc))


@st.composite
def documents(draw) -> ProvDocument:
    doc = ProvDocument()
    entity_names = draw(st.lists(_LOCALS, min_size=1, max_size=5, unique=True))
    activity_names = draw(st.lists(_LOCALS, min_size=1, max_size=3, unique=True))
    agent_names = draw(st.lists(_LOCALS, min_size=1, max_size=2, unique=True))
    for name in entity_names:
        doc.add_entity(qn(f"e-{name}"), draw(_ATTRS))
    for name in activity_names:
        doc.add_activity(
            qn(f"act-{name}"),
            start=draw(st.one_of(st.none(), _TIMES)),
            end=draw(st.one_of(st.none(), _TIMES)),
            attributes=draw(_ATTRS),
        )
    for name in agent_names:
        doc.add_agent(qn(f"ag-{name}"), draw(_ATTRS))
    entities = [qn(f"e-{name}") for name in entity_names]
    activities = [qn(f"act-{name}") for name in activity_names]
    agents = [qn(f"ag-{name}") for name in agent_names]
    n_relations = draw(st.integers(min_value=0, max_value=8))
    for _ in range(n_relations):
        kind = draw(st.sampled_from(list(RelationKind)))
        attrs = {} if kind is RelationKind.HAD_MEMBER else draw(_ATTRS)
        if kind is RelationKind.USED:
            doc.add_relation(kind, draw(st.sampled_from(activities)),
                             draw(st.sampled_from(entities)), attributes=attrs)
        elif kind is RelationKind.WAS_GENERATED_BY:
            doc.add_relation(kind, draw(st.sampled_from(entities)),
                             draw(st.sampled_from(activities)), attributes=attrs)
        elif kind is RelationKind.WAS_ASSOCIATED_WITH:
            doc.add_relation(
                kind, draw(st.sampled_from(activities)), draw(st.sampled_from(agents)),
                plan=draw(st.one_of(st.none(), st.sampled_from(entities))),
                attributes=attrs,
            )
        elif kind is RelationKind.WAS_ATTRIBUTED_TO:
            doc.add_relation(kind, draw(st.sampled_from(entities)),
                             draw(st.sampled_from(agents)), attributes=attrs)
        else:  # hadMember / wasDerivedFrom join entities
            doc.add_relation(kind, draw(st.sampled_from(entities)),
                             draw(st.sampled_from(entities)), attributes=attrs)
    return doc


@settings(max_examples=150, deadline=None)
@given(doc=documents())
def test_round_trip_identity_on_random_documents(doc):
    text = serialize_provn(doc)
    assert parse_provn(text) == doc
    assert serialize_provn(parse_provn(text)) == text
