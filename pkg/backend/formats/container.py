"""
MLD1 binary container.

Layout::

    0..4      magic b"MLD1"
    4..8      header length H (u32 little-endian)
    8..8+H    UTF-8 JSON header (sorted keys, compact)
    8+H..     payload; array offsets are relative to its start

Numeric columns share one ``f64le`` matrix, nominal columns one ``i64le``
matrix, and every string column gets its own ``utf8-catalog`` array. Matrices
are row-major. The header is validated completely before the payload is read.
"""

from __future__ import annotations

import json
import math
import struct
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from backend.errors import (
    BadMagic,
    CorruptHeader,
    CorruptPayload,
    RangeOverlap,
    TruncatedPayload,
    UnsupportedVersion,
)
from backend.formats.model import MISSING, NOMINAL, NUMERIC, STRING, AttributeSpec, Dataset

MAGIC = b"MLD1"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sI")
_U32 = struct.Struct("<I")

F64 = "f64le"
I64 = "i64le"
CATALOG = "utf8-catalog"

_NUMPY_DTYPES = {F64: np.dtype("<f8"), I64: np.dtype("<i8")}


class ArrayEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)

    name: str
    dtype: Literal["f64le", "i64le", "utf8-catalog"]
    shape: Tuple[int, int]
    byte_offset: int = Field(ge=0)
    byte_length: int = Field(ge=0)
    missing_rows: Optional[List[int]] = None


class AttributeEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)

    name: str = Field(min_length=1)
    kind: Literal["numeric", "nominal", "string"]
    categories: Optional[List[str]] = None
    array: str
    column: int = Field(ge=0)


class ContainerHeader(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)

    format_version: int
    relation: str
    arrays: List[ArrayEntry]
    attributes: List[AttributeEntry]


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _encode_catalog(values: List[str]) -> bytes:
    parts = [_U32.pack(len(values))]
    for value in values:
        raw = value.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
    return b"".join(parts)


def _decode_catalog(raw: bytes, count: int, name: str) -> List[str]:
    if len(raw) < 4:
        raise CorruptPayload(f"catalog {name!r} is missing its count")
    (declared,) = _U32.unpack_from(raw, 0)
    if declared != count:
        raise CorruptPayload(f"catalog {name!r} holds {declared} strings, expected {count}")
    values = []
    pos = 4
    for _ in range(declared):
        if pos + 4 > len(raw):
            raise CorruptPayload(f"catalog {name!r} ends inside a length prefix")
        (length,) = _U32.unpack_from(raw, pos)
        pos += 4
        if pos + length > len(raw):
            raise CorruptPayload(f"catalog {name!r} ends inside a string")
        try:
            values.append(raw[pos : pos + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise CorruptPayload(f"catalog {name!r} contains invalid UTF-8") from None
        pos += length
    if pos != len(raw):
        raise CorruptPayload(f"catalog {name!r} has {len(raw) - pos} trailing bytes")
    return values


def encode_container(ds: Dataset) -> bytes:
    """Serialize a Dataset into MLD1 bytes."""
    n = ds.n_instances
    numeric = [j for j, a in enumerate(ds.attributes) if a.kind == NUMERIC]
    nominal = [j for j, a in enumerate(ds.attributes) if a.kind == NOMINAL]

    arrays: List[dict] = []
    chunks: List[bytes] = []
    placement: Dict[int, Tuple[str, int]] = {}
    offset = 0

    def add(entry: dict, data: bytes) -> None:
        nonlocal offset
        entry.update(byte_offset=offset, byte_length=len(data))
        arrays.append(entry)
        chunks.append(data)
        offset += len(data)

    if numeric:
        matrix = np.array(
            [[np.nan if row[j] is MISSING else row[j] for j in numeric] for row in ds.rows],
            dtype="<f8",
        ).reshape(n, len(numeric))
        add({"name": "numeric", "dtype": F64, "shape": [n, len(numeric)]}, matrix.tobytes())
        placement.update({j: ("numeric", c) for c, j in enumerate(numeric)})

    if nominal:
        matrix = np.array(
            [[-1 if row[j] is MISSING else row[j] for j in nominal] for row in ds.rows],
            dtype="<i8",
        ).reshape(n, len(nominal))
        add({"name": "nominal", "dtype": I64, "shape": [n, len(nominal)]}, matrix.tobytes())
        placement.update({j: ("nominal", c) for c, j in enumerate(nominal)})

    for j, attribute in enumerate(ds.attributes):
        if attribute.kind != STRING:
            continue
        column = [row[j] for row in ds.rows]
        name = f"string:{attribute.name}"
        missing = [i for i, cell in enumerate(column) if cell is MISSING]
        data = _encode_catalog(["" if cell is MISSING else cell for cell in column])
        add({"name": name, "dtype": CATALOG, "shape": [n, 1], "missing_rows": missing}, data)
        placement[j] = (name, 0)

    manifest = []
    for j, attribute in enumerate(ds.attributes):
        entry = attribute.to_dict()
        entry["array"], entry["column"] = placement[j]
        manifest.append(entry)

    header = _canonical_json(
        {
            "format_version": FORMAT_VERSION,
            "relation": ds.relation,
            "arrays": arrays,
            "attributes": manifest,
        }
    )
    return _PREFIX.pack(MAGIC, len(header)) + header + b"".join(chunks)


def read_header(blob: bytes) -> Tuple[ContainerHeader, bytes]:
    """Validate the header and return it with the payload section."""
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagic()
    if len(blob) < _PREFIX.size:
        raise CorruptHeader("missing header length")
    _, header_length = _PREFIX.unpack_from(blob, 0)
    end = _PREFIX.size + header_length
    if end > len(blob):
        raise CorruptHeader(f"header declares {header_length} bytes but blob is shorter")

    try:
        raw = json.loads(blob[_PREFIX.size : end].decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise CorruptHeader(f"header is not valid JSON ({exc.__class__.__name__})") from None
    if not isinstance(raw, dict):
        raise CorruptHeader("header must be a JSON object")

    version = raw.get("format_version")
    if version != FORMAT_VERSION or isinstance(version, bool):
        if isinstance(version, int) and not isinstance(version, bool):
            raise UnsupportedVersion(version)
        raise CorruptHeader("format_version must be an integer")

    try:
        header = ContainerHeader.model_validate_json(blob[_PREFIX.size : end])
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise CorruptHeader(f"{where}: {first.get('msg')}") from None

    payload = blob[end:]
    _check_layout(header, len(payload))
    return header, payload


def _check_layout(header: ContainerHeader, payload_size: int) -> None:
    arrays = {}
    previous_end = 0
    rows: Optional[int] = None
    for entry in header.arrays:
        if entry.name in arrays:
            raise CorruptHeader(f"array {entry.name!r} declared twice")
        n, cols = entry.shape
        if n < 0 or cols < 0:
            raise CorruptHeader(f"array {entry.name!r} has a negative shape")
        if rows is not None and n != rows:
            raise CorruptHeader(f"array {entry.name!r} has {n} rows, expected {rows}")
        rows = n
        if entry.dtype == CATALOG:
            if cols != 1 or entry.missing_rows is None:
                raise CorruptHeader(f"catalog {entry.name!r} must be (rows, 1) with missing_rows")
            if any(not 0 <= i < n for i in entry.missing_rows):
                raise CorruptHeader(f"catalog {entry.name!r} lists a missing row out of range")
        else:
            if entry.missing_rows is not None:
                raise CorruptHeader(f"matrix {entry.name!r} cannot list missing_rows")
            if entry.byte_length != n * cols * 8:
                raise CorruptHeader(f"matrix {entry.name!r} byte_length does not match its shape")
        if entry.byte_offset < previous_end:
            raise RangeOverlap(entry.name)
        previous_end = entry.byte_offset + entry.byte_length
        arrays[entry.name] = entry

    if not header.attributes:
        raise CorruptHeader("container declares no attributes")
    names = set()
    used = set()
    for attribute in header.attributes:
        if attribute.name in names:
            raise CorruptHeader(f"attribute {attribute.name!r} declared twice")
        names.add(attribute.name)
        entry = arrays.get(attribute.array)
        if entry is None:
            raise CorruptHeader(f"attribute {attribute.name!r} refers to unknown array")
        expected = {NUMERIC: F64, NOMINAL: I64, STRING: CATALOG}[attribute.kind]
        if entry.dtype != expected:
            raise CorruptHeader(f"attribute {attribute.name!r} stored in a {entry.dtype} array")
        if attribute.column >= entry.shape[1]:
            raise CorruptHeader(f"attribute {attribute.name!r} column out of range")
        slot = (attribute.array, attribute.column)
        if slot in used:
            raise CorruptHeader(f"attribute {attribute.name!r} shares a column")
        used.add(slot)
        if attribute.kind == NOMINAL:
            cats = attribute.categories
            if not cats or len(set(cats)) != len(cats):
                raise CorruptHeader(f"attribute {attribute.name!r} needs distinct categories")
        elif attribute.categories is not None:
            raise CorruptHeader(f"attribute {attribute.name!r} cannot declare categories")
    if len(used) != sum(e.shape[1] for e in arrays.values()):
        raise CorruptHeader("some array columns are not described by an attribute")

    if previous_end > payload_size:
        raise TruncatedPayload(previous_end, payload_size)


def _matrix(entry: ArrayEntry, payload: bytes) -> np.ndarray:
    raw = payload[entry.byte_offset : entry.byte_offset + entry.byte_length]
    return np.frombuffer(raw, dtype=_NUMPY_DTYPES[entry.dtype]).reshape(entry.shape)


def decode_container(blob: bytes) -> Dataset:
    """Rebuild a Dataset from MLD1 bytes."""
    header, payload = read_header(bytes(blob))
    entries = {entry.name: entry for entry in header.arrays}
    n = header.arrays[0].shape[0] if header.arrays else 0

    columns = []
    for attribute in header.attributes:
        entry = entries[attribute.array]
        if attribute.kind == NUMERIC:
            values = _matrix(entry, payload)[:, attribute.column].tolist()
            column = []
            for value in values:
                if math.isnan(value):
                    column.append(MISSING)
                elif math.isinf(value):
                    raise CorruptPayload(f"attribute {attribute.name!r} holds a non-finite value")
                else:
                    column.append(float(value))
        elif attribute.kind == NOMINAL:
            limit = len(attribute.categories)
            column = []
            for value in _matrix(entry, payload)[:, attribute.column].tolist():
                if value == -1:
                    column.append(MISSING)
                elif 0 <= value < limit:
                    column.append(int(value))
                else:
                    raise CorruptPayload(f"attribute {attribute.name!r} index {value} out of range")
        else:
            raw = payload[entry.byte_offset : entry.byte_offset + entry.byte_length]
            column = _decode_catalog(raw, n, entry.name)
            for i in entry.missing_rows:
                column[i] = MISSING
        columns.append(column)

    specs = tuple(
        AttributeSpec(a.name, a.kind, tuple(a.categories) if a.kind == NOMINAL else None)
        for a in header.attributes
    )
    rows = tuple(zip(*columns)) if n else ()
    return Dataset(relation=header.relation, attributes=specs, rows=rows)


def read_array(blob: bytes, name: str) -> np.ndarray:
    """Direct named access to one stored matrix (catalogs come back as an object array)."""
    header, payload = read_header(bytes(blob))
    for entry in header.arrays:
        if entry.name == name:
            if entry.dtype == CATALOG:
                raw = payload[entry.byte_offset : entry.byte_offset + entry.byte_length]
                values = _decode_catalog(raw, entry.shape[0], entry.name)
                return np.array(values, dtype=object).reshape(entry.shape)
            return _matrix(entry, payload).copy()
    raise KeyError(name)
