"""In-memory tabular model shared by every codec."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Tuple, Union

NUMERIC = "numeric"
NOMINAL = "nominal"
STRING = "string"

AttributeKind = Literal["numeric", "nominal", "string"]


class _Missing:
    """Singleton marker for a missing cell."""

    _instance: Optional["_Missing"] = None

    def __new__(cls) -> "_Missing":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()

Cell = Union[float, int, str, _Missing]


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: AttributeKind
    categories: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("attribute name must not be empty")
        if self.kind == NOMINAL:
            if not self.categories:
                raise ValueError(f"nominal attribute {self.name!r} needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise ValueError(f"nominal attribute {self.name!r} has duplicate categories")
            object.__setattr__(self, "categories", tuple(self.categories))
        elif self.kind in (NUMERIC, STRING):
            if self.categories is not None:
                raise ValueError(f"{self.kind} attribute {self.name!r} cannot have categories")
        else:
            raise ValueError(f"unknown attribute kind {self.kind!r}")

    @classmethod
    def numeric(cls, name: str) -> "AttributeSpec":
        return cls(name, NUMERIC)

    @classmethod
    def nominal(cls, name: str, categories) -> "AttributeSpec":
        return cls(name, NOMINAL, tuple(categories))

    @classmethod
    def string(cls, name: str) -> "AttributeSpec":
        return cls(name, STRING)

    def label(self, index: int) -> str:
        return self.categories[index]

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind == NOMINAL:
            out["categories"] = list(self.categories)
        return out


@dataclass(frozen=True)
class Dataset:
    relation: str
    attributes: Tuple[AttributeSpec, ...]
    rows: Tuple[Tuple[Cell, ...], ...] = ()
    _index: Dict[str, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        index = {}
        for position, attribute in enumerate(self.attributes):
            if attribute.name in index:
                raise ValueError(f"duplicate attribute name {attribute.name!r}")
            index[attribute.name] = position
        object.__setattr__(self, "_index", index)

    @property
    def n_instances(self) -> int:
        return len(self.rows)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def position(self, name: str) -> int:
        """Column index of ``name``; raises KeyError when absent."""
        return self._index[name]

    def has_attribute(self, name: str) -> bool:
        return name in self._index

    def attribute(self, name: str) -> AttributeSpec:
        return self.attributes[self._index[name]]

    def column(self, name: str) -> list:
        j = self._index[name]
        return [row[j] for row in self.rows]

    def validate(self) -> None:
        """Raise ValueError when a row breaks arity or cell-kind rules."""
        width = len(self.attributes)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, expected {width}")
            for attribute, cell in zip(self.attributes, row):
                if not cell_matches(attribute, cell):
                    raise ValueError(
                        f"row {i}: cell {cell!r} does not match {attribute.kind} attribute {attribute.name!r}"
                    )


def cell_matches(attribute: AttributeSpec, cell: Cell) -> bool:
    if cell is MISSING:
        return True
    if attribute.kind == NUMERIC:
        return isinstance(cell, float) and math.isfinite(cell)
    if attribute.kind == NOMINAL:
        return (
            isinstance(cell, int)
            and not isinstance(cell, bool)
            and 0 <= cell < len(attribute.categories)
        )
    return isinstance(cell, str)


def format_number(value: float) -> str:
    """Shortest decimal text that parses back to the same 64-bit float."""
    return repr(float(value))
