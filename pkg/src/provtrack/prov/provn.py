"""PROV-N text serialization and parsing.

Covers exactly the statement subset this system emits: prefix declarations,
entity / activity / agent nodes, and the used, wasGeneratedBy,
wasAssociatedWith (with optional plan), wasAttributedTo, hadMember and
wasDerivedFrom relations, each with an optional attribute list of quoted
string values. Optional slots that the W3C grammar requires before an
attribute list (times, derivation activity) are emitted as the `-` marker.

Serialization is canonical - prefixes sorted, nodes by class then name,
relations by kind then subject then object - so equal documents always
produce byte-identical text, and `parse(serialize(d))` is structurally
equal to `d`. Statements outside the subset are rejected by name, never
silently dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timezone

from ..errors import (
    InvalidDocumentError,
    ProvNSyntaxError,
    UnknownPrefixError,
    UnsupportedStatementError,
)
from .document import (
    Activity,
    ProvDocument,
    QualifiedName,
    Relation,
    RelationKind,
    relation_sort_key,
    validate,
)

_NODE_STATEMENTS = ("entity", "activity", "agent")
_RELATION_STATEMENTS = {kind.value: kind for kind in RelationKind}

_TIME_FORMAT = "%Y-%m-%dT%H:%M:%S.%fZ"


def _format_time(value: datetime) -> str:
    return value.astimezone(timezone.utc).strftime(_TIME_FORMAT)


def _escape(value: str) -> str:
    return (
        value.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )


def _unescape(raw: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            nxt = raw[i + 1]
            out.append({"n": "\n", "r": "\r", "t": "\t"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


# -- serialization ---------------------------------------------------------------


def _attr_text(attributes: dict[str, str]) -> str:
    parts = [f'{key} = "{_escape(value)}"' for key, value in sorted(attributes.items())]
    return "[" + ", ".join(parts) + "]"


def _relation_text(relation: Relation) -> str:
    kind = relation.kind
    subject, obj = str(relation.subject), str(relation.object)
    attrs = relation.attributes
    if kind in (RelationKind.USED, RelationKind.WAS_GENERATED_BY):
        if attrs:
            return f"{kind.value}({subject}, {obj}, -, {_attr_text(attrs)})"
        return f"{kind.value}({subject}, {obj})"
    if kind is RelationKind.WAS_ASSOCIATED_WITH:
        plan = str(relation.plan) if relation.plan else "-"
        if attrs:
            return f"{kind.value}({subject}, {obj}, {plan}, {_attr_text(attrs)})"
        if relation.plan:
            return f"{kind.value}({subject}, {obj}, {plan})"
        return f"{kind.value}({subject}, {obj})"
    if kind is RelationKind.WAS_ATTRIBUTED_TO:
        if attrs:
            return f"{kind.value}({subject}, {obj}, {_attr_text(attrs)})"
        return f"{kind.value}({subject}, {obj})"
    if kind is RelationKind.HAD_MEMBER:
        if attrs:
            raise InvalidDocumentError("hadMember does not take attributes in PROV-N")
        return f"{kind.value}({subject}, {obj})"
    # wasDerivedFrom: activity/generation/usage slots are never emitted.
    if attrs:
        return f"{kind.value}({subject}, {obj}, -, -, -, {_attr_text(attrs)})"
    return f"{kind.value}({subject}, {obj})"


def serialize_provn(doc: ProvDocument) -> str:
    """Canonical PROV-N text for a document; deterministic byte-for-byte."""
    blocking = [
        finding
        for finding in validate(doc)
        if finding.code in ("DanglingReference", "UndeclaredPrefix")
    ]
    if blocking:
        first = blocking[0]
        raise InvalidDocumentError(f"{first.code}: {first.subject}: {first.message}")
    lines = ["document"]
    for prefix in sorted(doc.namespaces):
        lines.append(f"  prefix {prefix} <{doc.namespaces[prefix]}>")
    for name in sorted(doc.entities, key=str):
        attrs = doc.entities[name]
        if attrs:
            lines.append(f"  entity({name}, {_attr_text(attrs)})")
        else:
            lines.append(f"  entity({name})")
    for name in sorted(doc.activities, key=str):
        activity = doc.activities[name]
        start = _format_time(activity.start) if activity.start else "-"
        end = _format_time(activity.end) if activity.end else "-"
        if activity.attributes:
            lines.append(
                f"  activity({name}, {start}, {end}, {_attr_text(activity.attributes)})"
            )
        else:
            lines.append(f"  activity({name}, {start}, {end})")
    for name in sorted(doc.agents, key=str):
        attrs = doc.agents[name]
        if attrs:
            lines.append(f"  agent({name}, {_attr_text(attrs)})")
        else:
            lines.append(f"  agent({name})")
    for relation in sorted(doc.relations, key=relation_sort_key):
        lines.append(f"  {_relation_text(relation)}")
    lines.append("endDocument")
    return "\n".join(lines) + "\n"


# -- tokenizer --------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
      (?P<WS>\s+)
    | (?P<TIME>\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(?:\.\d+)?Z)
    | (?P<STRING>"(?:[^"\\]|\\.)*")
    | (?P<URI><[^>]*>)
    | (?P<QNAME>[A-Za-z_][A-Za-z0-9_]*:[A-Za-z0-9_][A-Za-z0-9_.\-]*)
    | (?P<NAME>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<LPAREN>\() | (?P<RPAREN>\)) | (?P<LBRACKET>\[) | (?P<RBRACKET>\])
    | (?P<COMMA>,) | (?P<EQUALS>=) | (?P<MARKER>-)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, column = 1, 1
    position = 0
    while position < len(text):
        match = _TOKEN_RE.match(text, position)
        if match is None:
            raise ProvNSyntaxError(f"unexpected character {text[position]!r}", line, column)
        kind = match.lastgroup or ""
        lexeme = match.group()
        if kind != "WS":
            tokens.append(_Token(kind=kind, text=lexeme, line=line, column=column))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            column = len(lexeme) - lexeme.rfind("\n")
        else:
            column += len(lexeme)
        position = match.end()
    tokens.append(_Token(kind="EOF", text="", line=line, column=column))
    return tokens


# -- parser ------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str) -> None:
        self._tokens = _tokenize(text)
        self._index = 0
        self._doc = ProvDocument(namespaces={})

    def _peek(self) -> _Token:
        return self._tokens[self._index]

    def _next(self) -> _Token:
        token = self._tokens[self._index]
        self._index += 1
        return token

    def _fail(self, message: str, token: _Token) -> ProvNSyntaxError:
        return ProvNSyntaxError(message, token.line, token.column)

    def _expect(self, kind: str, description: str) -> _Token:
        token = self._next()
        if token.kind != kind:
            raise self._fail(f"expected {description}, found {token.text!r}", token)
        return token

    def _expect_name(self, text: str) -> None:
        token = self._next()
        if token.kind != "NAME" or token.text != text:
            raise self._fail(f"expected '{text}', found {token.text!r}", token)

    def _qualified(self, token: _Token) -> QualifiedName:
        prefix, local = token.text.split(":", 1)
        if prefix not in self._doc.namespaces:
            raise UnknownPrefixError(
                f"prefix '{prefix}' used at line {token.line} is not declared"
            )
        return QualifiedName(prefix=prefix, local=local)

    def _parse_qname(self) -> QualifiedName:
        token = self._expect("QNAME", "a qualified name")
        return self._qualified(token)

    def _parse_string(self) -> str:
        token = self._expect("STRING", "a quoted string")
        return _unescape(token.text[1:-1])

    def _parse_attributes(self) -> dict[str, str]:
        self._expect("LBRACKET", "'['")
        attributes: dict[str, str] = {}
        if self._peek().kind == "RBRACKET":
            self._next()
            return attributes
        while True:
            key_token = self._expect("QNAME", "an attribute name")
            key = key_token.text
            prefix = key.split(":", 1)[0]
            if prefix not in self._doc.namespaces:
                raise UnknownPrefixError(
                    f"prefix '{prefix}' used at line {key_token.line} is not declared"
                )
            self._expect("EQUALS", "'='")
            attributes[key] = self._parse_string()
            token = self._next()
            if token.kind == "RBRACKET":
                return attributes
            if token.kind != "COMMA":
                raise self._fail("expected ',' or ']'", token)

    def _parse_time_or_marker(self) -> datetime | None:
        token = self._next()
        if token.kind == "MARKER":
            return None
        if token.kind == "TIME":
            text = token.text
            if "." not in text:
                text = text[:-1] + ".000000Z"
            return datetime.strptime(text, _TIME_FORMAT).replace(tzinfo=timezone.utc)
        raise self._fail("expected a time or '-'", token)

    def _parse_marker(self) -> None:
        token = self._next()
        if token.kind != "MARKER":
            raise self._fail("expected '-'", token)

    # statement bodies (opening name and '(' already consumed)

    def _parse_entity_like(self) -> tuple[QualifiedName, dict[str, str]]:
        name = self._parse_qname()
        attributes: dict[str, str] = {}
        token = self._next()
        if token.kind == "COMMA":
            attributes = self._parse_attributes()
            token = self._next()
        if token.kind != "RPAREN":
            raise self._fail("expected ')'", token)
        return name, attributes

    def _parse_activity(self) -> None:
        name = self._parse_qname()
        start = end = None
        attributes: dict[str, str] = {}
        token = self._next()
        if token.kind == "COMMA":
            start = self._parse_time_or_marker()
            self._expect("COMMA", "','")
            end = self._parse_time_or_marker()
            token = self._next()
            if token.kind == "COMMA":
                attributes = self._parse_attributes()
                token = self._next()
        if token.kind != "RPAREN":
            raise self._fail("expected ')'", token)
        self._doc.activities[name] = Activity(start=start, end=end, attributes=attributes)

    def _parse_relation(self, kind: RelationKind) -> None:
        subject = self._parse_qname()
        self._expect("COMMA", "','")
        obj = self._parse_qname()
        plan: QualifiedName | None = None
        attributes: dict[str, str] = {}
        token = self._next()
        if token.kind == "COMMA":
            if kind in (RelationKind.USED, RelationKind.WAS_GENERATED_BY):
                self._parse_marker()
                self._expect("COMMA", "','")
                attributes = self._parse_attributes()
            elif kind is RelationKind.WAS_ASSOCIATED_WITH:
                slot = self._next()
                if slot.kind == "QNAME":
                    plan = self._qualified(slot)
                elif slot.kind != "MARKER":
                    raise self._fail("expected a plan name or '-'", slot)
                if self._peek().kind == "COMMA":
                    self._next()
                    attributes = self._parse_attributes()
            elif kind is RelationKind.WAS_ATTRIBUTED_TO:
                attributes = self._parse_attributes()
            elif kind is RelationKind.HAD_MEMBER:
                raise self._fail("hadMember takes exactly two arguments", token)
            else:  # wasDerivedFrom
                self._parse_marker()
                self._expect("COMMA", "','")
                self._parse_marker()
                self._expect("COMMA", "','")
                self._parse_marker()
                self._expect("COMMA", "','")
                attributes = self._parse_attributes()
            token = self._next()
        if token.kind != "RPAREN":
            raise self._fail("expected ')'", token)
        self._doc.relations.append(
            Relation(kind=kind, subject=subject, object=obj, plan=plan, attributes=attributes)
        )

    def parse(self) -> ProvDocument:
        self._expect_name("document")
        while self._peek().kind == "NAME" and self._peek().text == "prefix":
            self._next()
            prefix_token = self._expect("NAME", "a prefix name")
            uri_token = self._expect("URI", "a <URI>")
            self._doc.namespaces[prefix_token.text] = uri_token.text[1:-1]
        while True:
            token = self._next()
            if token.kind == "NAME" and token.text == "endDocument":
                break
            if token.kind == "EOF":
                raise self._fail("unexpected end of input; missing 'endDocument'", token)
            if token.kind != "NAME":
                raise self._fail(f"expected a statement, found {token.text!r}", token)
            if self._peek().kind != "LPAREN":
                raise self._fail(f"expected '(' after '{token.text}'", self._peek())
            if token.text not in _NODE_STATEMENTS and token.text not in _RELATION_STATEMENTS:
                raise UnsupportedStatementError(token.text, token.line, token.column)
            self._next()  # consume '('
            if token.text == "entity":
                name, attributes = self._parse_entity_like()
                self._doc.entities[name] = attributes
            elif token.text == "agent":
                name, attributes = self._parse_entity_like()
                self._doc.agents[name] = attributes
            elif token.text == "activity":
                self._parse_activity()
            else:
                self._parse_relation(_RELATION_STATEMENTS[token.text])
        tail = self._next()
        if tail.kind != "EOF":
            raise self._fail(f"unexpected content after endDocument: {tail.text!r}", tail)
        return self._doc


def parse_provn(text: str) -> ProvDocument:
    """Parse canonical-subset PROV-N text back into a document."""
    return _Parser(text).parse()
