"""PROV document model, store-to-PROV mapping, PROV-N text, diffing."""

from .document import (
    ANALYSIS_NS,
    PROV_NS,
    Activity,
    AttributeMismatch,
    Finding,
    ProvDiff,
    ProvDocument,
    QualifiedName,
    Relation,
    RelationKind,
    diff,
    validate,
)
from .export import export_analysis, to_json
from .provn import parse_provn, serialize_provn

__all__ = [
    "ANALYSIS_NS",
    "PROV_NS",
    "Activity",
    "AttributeMismatch",
    "Finding",
    "ProvDiff",
    "ProvDocument",
    "QualifiedName",
    "Relation",
    "RelationKind",
    "diff",
    "export_analysis",
    "parse_provn",
    "serialize_provn",
    "to_json",
    "validate",
]
