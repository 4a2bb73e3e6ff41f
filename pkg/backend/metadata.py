"""
Dataset profiling: structural counts, distributional meta-features and a
human-readable summary.

Standard deviations are population standard deviations, entropies are in bits.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from backend import numeric
from backend.errors import EmptyInput, UnknownAttribute
from backend.formats.model import MISSING, NOMINAL, NUMERIC, STRING, Dataset, format_number

PREVIEW_ROWS = 10


class NumericStats(BaseModel):
    name: str
    min: Optional[float] = None
    max: Optional[float] = None
    mean: Optional[float] = None
    stdev: Optional[float] = None
    n_missing: int = 0


class NominalStats(BaseModel):
    name: str
    n_distinct_observed: int
    mode_label: Optional[str] = None


class MetaFeatureSet(BaseModel):
    n_instances: int
    n_attributes: int
    n_numeric: int
    n_nominal: int
    n_string: int
    n_missing_values: int
    pct_missing: float
    numeric_stats: List[NumericStats] = []
    nominal_stats: List[NominalStats] = []
    target: Optional[str] = None
    n_classes: Optional[int] = None
    class_entropy: Optional[float] = None
    default_accuracy: Optional[float] = None
    minority_class_fraction: Optional[float] = None


class AttributeRow(BaseModel):
    name: str
    kind: str
    missing: int


class DatasetSummary(BaseModel):
    relation: str
    shape: Tuple[int, int]
    attributes: List[AttributeRow]
    preview: List[str]


def class_entropy(labels: Sequence) -> float:
    """Shannon entropy of the observed label distribution, in bits."""
    if len(labels) == 0:
        raise EmptyInput("labels")
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    p = counts / counts.sum()
    entropy = float(-(p * np.log2(p)).sum()) + 0.0
    # rounding can push a uniform distribution a hair past its bound
    return min(max(entropy, 0.0), math.log2(len(counts)))


def default_accuracy(labels: Sequence) -> float:
    """Accuracy of always predicting the most frequent label."""
    if len(labels) == 0:
        raise EmptyInput("labels")
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return int(counts.max()) / len(labels)


def _numeric_stats(name: str, column: list) -> NumericStats:
    values = [c for c in column if c is not MISSING]
    missing = len(column) - len(values)
    if not values:
        return NumericStats(name=name, n_missing=missing)
    mean, stdev = numeric.mean_std(values)
    return NumericStats(
        name=name,
        min=min(values),
        max=max(values),
        mean=_finite(mean),
        stdev=_finite(stdev),
        n_missing=missing,
    )


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def _nominal_stats(name: str, categories: Sequence[str], column: list) -> NominalStats:
    counts = Counter(c for c in column if c is not MISSING)
    if not counts:
        return NominalStats(name=name, n_distinct_observed=0)
    top = max(counts.values())
    mode = min(categories[i] for i, n in counts.items() if n == top)
    return NominalStats(name=name, n_distinct_observed=len(counts), mode_label=mode)


def compute_meta_features(ds: Dataset, target: Optional[str] = None) -> MetaFeatureSet:
    """Profile ``ds``; class fields are filled when ``target`` names a nominal attribute."""
    if target is not None and not ds.has_attribute(target):
        raise UnknownAttribute(target)

    kinds = Counter(a.kind for a in ds.attributes)
    n_missing = sum(1 for row in ds.rows for cell in row if cell is MISSING)
    n_cells = ds.n_instances * ds.n_attributes

    numeric_stats = []
    nominal_stats = []
    for attribute in ds.attributes:
        column = ds.column(attribute.name)
        if attribute.kind == NUMERIC:
            numeric_stats.append(_numeric_stats(attribute.name, column))
        elif attribute.kind == NOMINAL:
            nominal_stats.append(_nominal_stats(attribute.name, attribute.categories, column))

    features = MetaFeatureSet(
        n_instances=ds.n_instances,
        n_attributes=ds.n_attributes,
        n_numeric=kinds[NUMERIC],
        n_nominal=kinds[NOMINAL],
        n_string=kinds[STRING],
        n_missing_values=n_missing,
        pct_missing=n_missing / n_cells if n_cells else 0.0,
        numeric_stats=numeric_stats,
        nominal_stats=nominal_stats,
        target=target,
    )

    if target is not None and ds.attribute(target).kind == NOMINAL:
        attribute = ds.attribute(target)
        labels = [c for c in ds.column(target) if c is not MISSING]
        features.n_classes = len(attribute.categories)
        if labels:
            counts = Counter(labels)
            features.class_entropy = class_entropy(labels)
            features.default_accuracy = default_accuracy(labels)
            features.minority_class_fraction = min(
                counts.get(i, 0) for i in range(len(attribute.categories))
            ) / len(labels)
    return features


def _render_cell(attribute, cell) -> str:
    if cell is MISSING:
        return "?"
    if attribute.kind == NUMERIC:
        return format_number(cell)
    if attribute.kind == NOMINAL:
        return attribute.categories[cell]
    return cell


def dataset_summary(ds: Dataset) -> DatasetSummary:
    table = [
        AttributeRow(
            name=a.name,
            kind=a.kind,
            missing=sum(1 for cell in ds.column(a.name) if cell is MISSING),
        )
        for a in ds.attributes
    ]
    preview = [
        ", ".join(_render_cell(a, c) for a, c in zip(ds.attributes, row))
        for row in ds.rows[:PREVIEW_ROWS]
    ]
    return DatasetSummary(
        relation=ds.relation,
        shape=(ds.n_instances, ds.n_attributes),
        attributes=table,
        preview=preview,
    )


def render_summary(summary: DatasetSummary, meta: Optional[MetaFeatureSet] = None) -> str:
    lines = [
        f"relation: {summary.relation}",
        f"shape: {summary.shape[0]} instances x {summary.shape[1]} attributes",
        "",
        pd.DataFrame([row.model_dump() for row in summary.attributes]).to_string(index=False),
    ]
    if meta is not None:
        lines += ["", f"missing values: {meta.n_missing_values} ({meta.pct_missing:.1%})"]
        if meta.numeric_stats:
            lines += ["", "numeric attributes (stdev is the population stdev):"]
            frame = pd.DataFrame([s.model_dump() for s in meta.numeric_stats])
            lines.append(frame.to_string(index=False, na_rep="-"))
        if meta.n_classes is not None:
            lines += ["", f"target: {meta.target} ({meta.n_classes} classes)"]
            if meta.class_entropy is not None:
                lines.append(f"class entropy: {meta.class_entropy:.4f} bits")
                lines.append(f"default accuracy: {meta.default_accuracy:.4f}")
    lines += ["", f"first {len(summary.preview)} rows:"]
    lines += [f"  {row}" for row in summary.preview]
    return "\n".join(lines) + "\n"
