"""
ARFF reader and canonical writer.

Supported subset: ``numeric``/``real``/``integer``, ``string`` and nominal
attributes; dense data rows. ``date``, ``relational`` and sparse rows are
rejected with a structured error instead of being misparsed.
"""

from __future__ import annotations

import math
import re
from typing import List, Optional, Tuple

from backend.errors import (
    ArityMismatch,
    InvalidEncoding,
    InvalidNumericValue,
    MalformedHeader,
    MalformedRow,
    MissingSection,
    UnknownNominalValue,
)
from backend.formats.model import (
    MISSING,
    NOMINAL,
    NUMERIC,
    AttributeSpec,
    Dataset,
    format_number,
)

_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_ESCAPES = {"n": "\n", "r": "\r", "t": "\t"}
_NEEDS_QUOTES = set(",'\" \t\n\r\\%{}")
_NUMERIC_TYPES = {"numeric", "real", "integer"}

# (text, was_quoted)
Token = Tuple[str, bool]


def _read_quoted(line: str, start: int) -> Tuple[str, int]:
    """Read a quoted token starting at ``line[start]``; return (text, index after closing quote)."""
    quote = line[start]
    out = []
    i = start + 1
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            out.append(_ESCAPES.get(nxt, nxt))
            i += 2
            continue
        if ch == quote:
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise ValueError("unterminated quote")


def _split_fields(line: str) -> List[Token]:
    """Split a comma separated line, honouring single and double quotes."""
    tokens: List[Token] = []
    i = 0
    n = len(line)
    while True:
        while i < n and line[i] in " \t":
            i += 1
        if i < n and line[i] in "'\"":
            text, i = _read_quoted(line, i)
            while i < n and line[i] in " \t":
                i += 1
            if i < n and line[i] != ",":
                raise ValueError("unexpected text after quoted value")
            tokens.append((text, True))
        else:
            end = line.find(",", i)
            if end == -1:
                end = n
            tokens.append((line[i:end].strip(), False))
            i = end
        if i >= n:
            return tokens
        i += 1  # skip the comma


def _read_word(text: str) -> Tuple[str, str]:
    """Read one (possibly quoted) word and return it with the remaining text."""
    text = text.lstrip()
    if not text:
        raise ValueError("expected a name")
    if text[0] in "'\"":
        word, end = _read_quoted(text, 0)
        return word, text[end:]
    parts = text.split(None, 1)
    return parts[0], parts[1] if len(parts) > 1 else ""


def _parse_attribute(rest: str, lineno: int) -> AttributeSpec:
    try:
        name, type_spec = _read_word(rest)
    except ValueError as exc:
        raise MalformedHeader(lineno, f"bad attribute declaration: {exc}") from None
    type_spec = type_spec.strip()
    if not name:
        raise MalformedHeader(lineno, "attribute name must not be empty")
    if type_spec.startswith("{"):
        if not type_spec.endswith("}") or len(type_spec) < 2:
            raise MalformedHeader(lineno, "nominal type missing closing }")
        inner = type_spec[1:-1]
        if not inner.strip():
            raise MalformedHeader(lineno, f"nominal attribute {name!r} has no categories")
        try:
            labels = [text for text, _ in _split_fields(inner)]
        except ValueError as exc:
            raise MalformedHeader(lineno, f"bad nominal list: {exc}") from None
        if len(set(labels)) != len(labels):
            raise MalformedHeader(lineno, f"nominal attribute {name!r} repeats a category")
        return AttributeSpec.nominal(name, labels)
    lowered = type_spec.lower()
    if lowered in _NUMERIC_TYPES:
        return AttributeSpec.numeric(name)
    if lowered == "string":
        return AttributeSpec.string(name)
    raise MalformedHeader(lineno, f"unsupported attribute type {type_spec!r}")


def _parse_number(token: str) -> Optional[float]:
    if not _NUMBER_RE.fullmatch(token):
        return None
    value = float(token)
    return value if math.isfinite(value) else None


def _parse_row(line: str, lineno: int, attributes: List[AttributeSpec], lookups: List[dict]):
    if line.lstrip().startswith("{"):
        raise ArityMismatch(lineno, len(attributes), len(line.split(",")))
    try:
        tokens = _split_fields(line)
    except ValueError as exc:
        raise MalformedRow(lineno, str(exc)) from None
    if len(tokens) != len(attributes):
        raise ArityMismatch(lineno, len(attributes), len(tokens))
    cells = []
    for (text, quoted), attribute, lookup in zip(tokens, attributes, lookups):
        if not quoted and text == "?":
            cells.append(MISSING)
        elif attribute.kind == NUMERIC:
            value = _parse_number(text)
            if value is None:
                raise InvalidNumericValue(lineno, attribute.name, text)
            cells.append(value)
        elif attribute.kind == NOMINAL:
            if text not in lookup:
                raise UnknownNominalValue(lineno, attribute.name, text)
            cells.append(lookup[text])
        else:
            cells.append(text)
    return tuple(cells)


def parse_arff(text: str) -> Dataset:
    """Parse one complete ARFF document into a Dataset."""
    if isinstance(text, (bytes, bytearray)):
        text = decode_text(bytes(text))

    relation: Optional[str] = None
    attributes: List[AttributeSpec] = []
    names = set()
    rows = []
    lookups: List[dict] = []
    in_data = False
    lineno = 0

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        if in_data:
            rows.append(_parse_row(line, lineno, attributes, lookups))
            continue

        if not stripped.startswith("@"):
            raise MalformedHeader(lineno, "expected a header declaration")
        parts = stripped.split(None, 1)
        keyword = parts[0].lower()
        rest = parts[1] if len(parts) > 1 else ""

        if keyword == "@relation":
            if relation is not None:
                raise MalformedHeader(lineno, "duplicate @relation")
            try:
                relation = _read_word(rest)[0] if rest.strip() else ""
            except ValueError as exc:
                raise MalformedHeader(lineno, f"bad relation name: {exc}") from None
        elif keyword == "@attribute":
            if relation is None:
                raise MissingSection("@relation", lineno)
            attribute = _parse_attribute(rest, lineno)
            if attribute.name in names:
                raise MalformedHeader(lineno, f"attribute {attribute.name!r} declared twice")
            names.add(attribute.name)
            attributes.append(attribute)
        elif keyword == "@data":
            if relation is None:
                raise MissingSection("@relation", lineno)
            if not attributes:
                raise MissingSection("@attribute", lineno)
            if rest.strip():
                raise MalformedHeader(lineno, "unexpected text after @data")
            lookups = [
                {label: i for i, label in enumerate(a.categories)} if a.kind == NOMINAL else {}
                for a in attributes
            ]
            in_data = True
        else:
            raise MalformedHeader(lineno, f"unsupported declaration {parts[0]!r}")

    if relation is None:
        raise MissingSection("@relation", max(lineno, 1))
    if not in_data:
        raise MissingSection("@data", max(lineno, 1))
    return Dataset(relation=relation, attributes=tuple(attributes), rows=tuple(rows))


def decode_text(blob: bytes) -> str:
    try:
        return blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidEncoding(f"ARFF text is not valid UTF-8 at byte {exc.start}") from None


def quote(token: str) -> str:
    """Single-quote ``token`` when it would not survive an unquoted round-trip."""
    if (
        token
        and token != "?"
        and not (_NEEDS_QUOTES & set(token))
        and not any(ch.isspace() for ch in token)
    ):
        return token
    escaped = (
        token.replace("\\", "\\\\")
        .replace("'", "\\'")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )
    return f"'{escaped}'"


def _type_spec(attribute: AttributeSpec) -> str:
    if attribute.kind == NOMINAL:
        return "{" + ",".join(quote(label) for label in attribute.categories) + "}"
    return attribute.kind


def _format_cell(attribute: AttributeSpec, cell) -> str:
    if cell is MISSING:
        return "?"
    if attribute.kind == NUMERIC:
        return format_number(cell)
    if attribute.kind == NOMINAL:
        return quote(attribute.categories[cell])
    return quote(cell)


def write_arff(ds: Dataset) -> str:
    """Canonical ARFF text: lowercase keywords, one row per line, ``?`` for missing cells."""
    lines = [f"@relation {quote(ds.relation)}", ""]
    for attribute in ds.attributes:
        lines.append(f"@attribute {quote(attribute.name)} {_type_spec(attribute)}")
    lines += ["", "@data"]
    for row in ds.rows:
        lines.append(",".join(_format_cell(a, c) for a, c in zip(ds.attributes, row)))
    return "\n".join(lines) + "\n"
