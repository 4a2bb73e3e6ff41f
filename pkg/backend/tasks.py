"""
Task generation: estimation procedure, deterministic splits, measures and the
submission schema a run must follow.

Splits are reproducible bit-for-bit: each repeat draws from its own splitmix64
stream, shuffles row positions with Fisher-Yates (per class, in ascending
class order, when stratified) and deals them round-robin to the folds.
"""

from __future__ import annotations

import json
from enum import Enum
from typing import List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, Field, computed_field

from backend.errors import (
    InvalidProcedure,
    InvalidTaskDefinition,
    TargetKindMismatch,
    TooFewInstances,
    UnknownAttribute,
)
from backend.formats.model import MISSING, NOMINAL, NUMERIC, Dataset
from backend.measures import CLASSIFICATION, DEFAULT_MEASURES, REGRESSION, check_measures

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
EXCLUDED = -1
# upper bound on cross-validation repeats per task
MAX_REPEATS = 100


class TaskType(str, Enum):
    CLASSIFICATION = CLASSIFICATION
    REGRESSION = REGRESSION


class EstimationProcedure(BaseModel):
    kind: Literal["crossvalidation"] = "crossvalidation"
    folds: int = 10
    repeats: int = 1
    seed: Optional[int] = Field(default=None, ge=0, le=MASK64)
    stratified: Optional[bool] = None


class Task(BaseModel):
    task_id: int
    name: str
    type: TaskType
    dataset_id: int
    target: str
    input_features: List[str]
    procedure: EstimationProcedure
    splits: List[List[int]]
    excluded_rows: List[int] = []
    class_labels: Optional[List[str]] = None
    measures: List[str]
    submission_schema: List[str]

    @computed_field
    @property
    def dataset_url(self) -> str:
        return f"/api/v1/datasets/{self.dataset_id}/file"

    @property
    def primary_measure(self) -> str:
        return self.measures[0]

    @property
    def is_classification(self) -> bool:
        return self.type == TaskType.CLASSIFICATION

    def test_rows(self, repeat: int, fold: int) -> List[int]:
        return [row for row, f in enumerate(self.splits[repeat]) if f == fold]


def splitmix64_next(state: int) -> tuple:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def splitmix64_mix(value: int) -> int:
    return splitmix64_next(value & MASK64)[1]


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state, out = splitmix64_next(self.state)
        return out

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.next() % (i + 1)
            items[i], items[j] = items[j], items[i]


def generate_splits(
    labels_or_n: Union[Sequence, int], proc: EstimationProcedure
) -> List[List[int]]:
    """Fold id per position for every repeat.

    ``labels_or_n`` is either the class label of every position (stratified
    splits) or a plain position count. A missing seed counts as 0.
    """
    if isinstance(labels_or_n, int):
        labels = None
        n = labels_or_n
    else:
        labels = list(labels_or_n)
        n = len(labels)
    k, repeats = proc.folds, proc.repeats
    if k < 2:
        raise InvalidProcedure(f"cross-validation needs at least 2 folds, got {k}")
    if not 1 <= repeats <= MAX_REPEATS:
        raise InvalidProcedure(
            f"cross-validation needs between 1 and {MAX_REPEATS} repeats, got {repeats}"
        )
    if k > n:
        raise TooFewInstances(k, n)

    stratified = proc.stratified if proc.stratified is not None else labels is not None
    seed = proc.seed or 0
    assignment = []
    for repeat in range(repeats):
        rng = SplitMix64(splitmix64_mix(seed ^ repeat))
        if stratified and labels is not None:
            order = []
            for label in sorted(set(labels)):
                members = [i for i, value in enumerate(labels) if value == label]
                rng.shuffle(members)
                order.extend(members)
        else:
            order = list(range(n))
            rng.shuffle(order)
        folds = [0] * n
        for position, row in enumerate(order):
            folds[row] = position % k
        assignment.append(folds)
    return assignment


def submission_schema(task_type: TaskType, class_labels: Optional[Sequence[str]]) -> List[str]:
    columns = ["repeat", "fold", "row_index", "prediction"]
    if task_type == TaskType.CLASSIFICATION:
        columns += [f"confidence.{label}" for label in class_labels]
    return columns


def _infer_type(kind: str) -> TaskType:
    if kind == NOMINAL:
        return TaskType.CLASSIFICATION
    if kind == NUMERIC:
        return TaskType.REGRESSION
    raise TargetKindMismatch(f"a {kind} attribute cannot be a prediction target")


def create_task(
    ds: Dataset,
    dataset_id: int,
    target: str,
    type: Optional[TaskType] = None,
    proc: Optional[EstimationProcedure] = None,
    *,
    task_id: int = 0,
    measures: Optional[List[str]] = None,
    input_features: Optional[List[str]] = None,
    dataset_name: Optional[str] = None,
) -> Task:
    """Build a fully specified Task over ``ds``."""
    if not ds.has_attribute(target):
        raise UnknownAttribute(target)
    attribute = ds.attribute(target)
    try:
        task_type = TaskType(type) if type is not None else _infer_type(attribute.kind)
    except ValueError:
        raise InvalidTaskDefinition(f"unknown task type {type!r}") from None
    required = NOMINAL if task_type == TaskType.CLASSIFICATION else NUMERIC
    if attribute.kind != required:
        raise TargetKindMismatch(
            f"{task_type.value} needs a {required} target, {target!r} is {attribute.kind}"
        )

    if input_features is None:
        input_features = [a.name for a in ds.attributes if a.name != target]
    else:
        for name in input_features:
            if not ds.has_attribute(name):
                raise UnknownAttribute(name)
        if target in input_features:
            raise InvalidTaskDefinition(f"target {target!r} cannot also be an input feature")
        if len(set(input_features)) != len(input_features):
            raise InvalidTaskDefinition("input features must be distinct")

    proc = (proc or EstimationProcedure()).model_copy()
    classification = task_type == TaskType.CLASSIFICATION
    if proc.stratified is None:
        proc.stratified = classification
    elif proc.stratified and not classification:
        raise InvalidProcedure("stratified splits need a nominal target")
    if proc.seed is None:
        proc.seed = splitmix64_mix(task_id)

    column = ds.column(target)
    labeled = [i for i, cell in enumerate(column) if cell is not MISSING]
    excluded = [i for i, cell in enumerate(column) if cell is MISSING]
    if classification:
        positions = generate_splits([column[i] for i in labeled], proc)
    else:
        positions = generate_splits(len(labeled), proc)

    splits = []
    for repeat in positions:
        folds = [EXCLUDED] * ds.n_instances
        for position, row in enumerate(labeled):
            folds[row] = repeat[position]
        splits.append(folds)

    class_labels = list(attribute.categories) if classification else None
    return Task(
        task_id=task_id,
        name=f"Predict {target} of {dataset_name or ds.relation}",
        type=task_type,
        dataset_id=dataset_id,
        target=target,
        input_features=list(input_features),
        procedure=proc,
        splits=splits,
        excluded_rows=excluded,
        class_labels=class_labels,
        measures=check_measures(measures or DEFAULT_MEASURES[task_type.value], task_type.value),
        submission_schema=submission_schema(task_type, class_labels),
    )


def task_document(t: Task) -> bytes:
    """Canonical JSON: sorted keys, no insignificant whitespace."""
    return json.dumps(
        t.model_dump(mode="json"), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def parse_task_document(doc: Union[bytes, str]) -> Task:
    return Task.model_validate_json(doc)
