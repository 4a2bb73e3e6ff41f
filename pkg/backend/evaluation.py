"""
Server-side evaluation: prediction validation, metric computation and
per-fold aggregation.

Conventions:
- precision/recall/F1 terms with a zero denominator count as 0;
- AUC is the Mann-Whitney statistic with ties counting one half; multiclass AUC
  is the unweighted one-vs-rest mean over classes present on both sides;
- scores are computed per (repeat, fold) and then averaged; stdev is the
  population stdev over folds.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel

from backend import numeric
from backend.errors import (
    EmptyInput,
    LengthMismatch,
    PredictionFileError,
    ScoreOutOfRange,
    SingleClassInput,
    UnknownLabel,
    ValidationFailed,
)
from backend.formats.model import MISSING, Dataset, format_number
from backend.tasks import Task

logger = structlog.get_logger(__name__)

Prediction = Union[str, float]


@dataclass(frozen=True)
class PredictionRow:
    repeat: int
    fold: int
    row_index: int
    prediction: Prediction
    # label -> confidence; None values mark empty or unreadable cells
    confidences: Optional[Dict[str, Optional[float]]] = None


@dataclass
class PredictionSet:
    rows: List[PredictionRow] = field(default_factory=list)


@dataclass(frozen=True)
class Violation:
    kind: str
    repeat: Optional[int] = None
    row_index: Optional[int] = None
    expected: Optional[object] = None
    got: Optional[object] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: Tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


class FoldScore(BaseModel):
    repeat: int
    fold: int
    value: float


class MeasureScores(BaseModel):
    folds: List[FoldScore] = []
    mean: Optional[float] = None
    stdev: Optional[float] = None
    flags: List[str] = []


class ConfusionSummary(BaseModel):
    classes: List[str]
    counts: List[List[int]]


class EvaluationResult(BaseModel):
    measures: Dict[str, MeasureScores]
    confusion_matrix: Optional[ConfusionSummary] = None

    def mean(self, measure_id: str) -> Optional[float]:
        scores = self.measures.get(measure_id)
        return scores.mean if scores is not None else None


# Prediction files


def _check_field_counts(text: str) -> None:
    """Every non-blank line must have as many fields as the header."""
    reader = csv.reader(io.StringIO(text))
    width = None
    try:
        for fields in reader:
            if not fields:
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise PredictionFileError(
                    f"line {reader.line_num}: expected {width} fields, got {len(fields)}",
                    [reader.line_num],
                )
    except csv.Error as exc:
        raise PredictionFileError(f"unreadable prediction file: {exc}") from None


def parse_prediction_csv(text: str, task: Task) -> PredictionSet:
    """Read an uploaded prediction file; its header must equal the task's submission schema."""
    _check_field_counts(text)
    try:
        frame = pd.read_csv(
            io.StringIO(text), index_col=False, dtype=str, keep_default_na=False, na_filter=False
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
        raise PredictionFileError(f"unreadable prediction file: {exc}") from None
    if list(frame.columns) != task.submission_schema:
        raise PredictionFileError(
            "prediction file header must be exactly: " + ",".join(task.submission_schema),
            [list(map(str, frame.columns))],
        )

    labels = task.class_labels or []
    rows = []
    for line, record in enumerate(frame.itertuples(index=False, name=None), start=2):
        try:
            repeat, fold, row_index = (int(record[0]), int(record[1]), int(record[2]))
        except ValueError:
            raise PredictionFileError(f"line {line}: repeat, fold and row_index must be integers") from None
        prediction: Prediction = record[3]
        confidences = None
        if task.is_classification:
            cells = record[4:]
            if any(cell.strip() for cell in cells):
                confidences = {label: _to_float(cell) for label, cell in zip(labels, cells)}
        else:
            value = _to_float(prediction)
            prediction = value if value is not None else prediction
        rows.append(PredictionRow(repeat, fold, row_index, prediction, confidences))
    return PredictionSet(rows)


def _to_float(cell: str) -> Optional[float]:
    try:
        return float(cell)
    except ValueError:
        return None


def write_prediction_csv(p: PredictionSet, task: Task) -> str:
    labels = task.class_labels or []
    records = []
    for row in p.rows:
        prediction = (
            format_number(row.prediction) if isinstance(row.prediction, float) else str(row.prediction)
        )
        record = [row.repeat, row.fold, row.row_index, prediction]
        if task.is_classification:
            conf = row.confidences or {}
            record += [
                "" if conf.get(label) is None else format_number(conf[label]) for label in labels
            ]
        records.append(record)
    frame = pd.DataFrame(records, columns=task.submission_schema, dtype=object)
    return frame.to_csv(index=False, lineterminator="\n")


# Validation


def validate_predictions(t: Task, p: PredictionSet) -> List[Violation]:
    """Every violation of the submission contract, in file order then (repeat, row) order."""
    violations: List[Violation] = []
    seen = set()
    labels = set(t.class_labels or [])
    n_rows = len(t.splits[0]) if t.splits else 0

    for row in p.rows:
        r, i = row.repeat, row.row_index
        if not (0 <= r < len(t.splits) and 0 <= i < n_rows) or t.splits[r][i] < 0:
            violations.append(Violation("UnknownRow", r, i))
            continue
        if (r, i) in seen:
            violations.append(Violation("DuplicatePrediction", r, i))
            continue
        seen.add((r, i))
        expected = t.splits[r][i]
        if row.fold != expected:
            violations.append(Violation("FoldMismatch", r, i, expected=expected, got=row.fold))

        if t.is_classification:
            if not isinstance(row.prediction, str) or row.prediction not in labels:
                violations.append(Violation("UnknownLabel", r, i, got=str(row.prediction)))
            if row.confidences is not None:
                values = [row.confidences.get(label) for label in t.class_labels]
                if any(v is None for v in values):
                    violations.append(Violation("IncompleteConfidences", r, i))
                elif any(not 0.0 <= v <= 1.0 for v in values):
                    violations.append(Violation("ConfidenceOutOfRange", r, i))
        elif not isinstance(row.prediction, float) or not math.isfinite(row.prediction):
            violations.append(Violation("InvalidPrediction", r, i, got=str(row.prediction)))

    for r, folds in enumerate(t.splits):
        for i, fold in enumerate(folds):
            if fold >= 0 and (r, i) not in seen:
                violations.append(Violation("MissingPrediction", r, i))
    return violations


# Metrics


def _check_pair(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise LengthMismatch(len(a), len(b))
    if len(a) == 0:
        raise EmptyInput()


def accuracy(y_true: Sequence, y_pred: Sequence) -> float:
    _check_pair(y_true, y_pred)
    return sum(1 for a, b in zip(y_true, y_pred) if a == b) / len(y_true)


def confusion(y_true: Sequence, y_pred: Sequence, classes: Sequence) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise LengthMismatch(len(y_true), len(y_pred))
    index = {label: i for i, label in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for actual, predicted in zip(y_true, y_pred):
        if actual not in index:
            raise UnknownLabel(actual)
        if predicted not in index:
            raise UnknownLabel(predicted)
        counts[index[actual], index[predicted]] += 1
    return ConfusionMatrix(tuple(classes), counts)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def per_class_scores(cm: ConfusionMatrix) -> List[Tuple[float, float, float]]:
    """(precision, recall, f1) for every class, in class order."""
    counts = cm.counts
    scores = []
    for c in range(len(cm.classes)):
        tp = int(counts[c, c])
        precision = _ratio(tp, int(counts[:, c].sum()))
        recall = _ratio(tp, int(counts[c, :].sum()))
        f1 = _ratio(2 * precision * recall, precision + recall)
        scores.append((precision, recall, f1))
    return scores


def precision_recall_f1_macro(cm: ConfusionMatrix) -> Dict[str, float]:
    scores = per_class_scores(cm)
    if not scores:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    n = len(scores)
    return {
        "precision": math.fsum(s[0] for s in scores) / n,
        "recall": math.fsum(s[1] for s in scores) / n,
        "f1": math.fsum(s[2] for s in scores) / n,
    }


def auc_binary(y_true: Sequence, scores: Sequence[float]) -> float:
    """Mann-Whitney AUC; ``y_true`` marks positives with True/1."""
    if len(y_true) != len(scores):
        raise LengthMismatch(len(y_true), len(scores))
    positive = np.asarray(y_true, dtype=bool)
    values = np.asarray(scores, dtype=float)
    pos, neg = values[positive], np.sort(values[~positive])
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClassInput()
    below = np.searchsorted(neg, pos, side="left")
    at_or_below = np.searchsorted(neg, pos, side="right")
    wins = int(below.sum())
    ties = int((at_or_below - below).sum())
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def auc_one_vs_rest(
    y_true: Sequence[str], confidences: Sequence[Sequence[float]], classes: Sequence[str]
) -> Optional[float]:
    """Unweighted mean of per-class AUCs; classes without both sides are left out."""
    matrix = np.asarray(confidences, dtype=float)
    truth = np.asarray(y_true, dtype=object)
    values = []
    for c, label in enumerate(classes):
        positive = truth == label
        if positive.all() or not positive.any():
            continue
        values.append(auc_binary(positive, matrix[:, c]))
    return numeric.mean(values) if values else None


def rmse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    _check_pair(y_true, y_pred)
    try:
        return numeric.rms_difference(y_true, y_pred)
    except OverflowError:
        raise ScoreOutOfRange("root_mean_squared_error") from None


def mae(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    _check_pair(y_true, y_pred)
    try:
        return numeric.mean_abs_difference(y_true, y_pred)
    except OverflowError:
        raise ScoreOutOfRange("mean_absolute_error") from None


# Run evaluation


def _fold_score(measure_id: str, t: Task, truth: list, rows: List[PredictionRow]):
    """Returns (value, flag); value None means the fold is skipped for this measure."""
    predicted = [row.prediction for row in rows]
    if measure_id == "predictive_accuracy":
        return accuracy(truth, predicted), None
    if measure_id in ("precision_macro", "recall_macro", "f_measure_macro"):
        macro = precision_recall_f1_macro(confusion(truth, predicted, t.class_labels))
        key = {"precision_macro": "precision", "recall_macro": "recall", "f_measure_macro": "f1"}
        return macro[key[measure_id]], None
    if measure_id == "area_under_roc_curve":
        if any(row.confidences is None for row in rows):
            return None, "no confidences"
        matrix = [[row.confidences[label] for label in t.class_labels] for row in rows]
        value = auc_one_vs_rest(truth, matrix, t.class_labels)
        return (value, None) if value is not None else (None, "single class in fold")
    if measure_id == "root_mean_squared_error":
        return rmse(truth, predicted), None
    if measure_id == "mean_absolute_error":
        return mae(truth, predicted), None
    raise ValueError(f"no scorer for {measure_id!r}")


def _aggregate(measure_id: str, folds: List[FoldScore], flags: List[str]) -> MeasureScores:
    values = [f.value for f in folds]
    if not values:
        return MeasureScores(folds=folds, flags=flags)
    mean, stdev = numeric.mean_std(values)
    # stored records must round-trip through JSON
    if not all(math.isfinite(v) for v in (*values, mean, stdev)):
        raise ScoreOutOfRange(measure_id)
    return MeasureScores(folds=folds, mean=mean, stdev=stdev, flags=flags)


def evaluate_run(t: Task, ds: Dataset, p: PredictionSet) -> EvaluationResult:
    """Score ``p`` on every (repeat, fold) of ``t`` using the true targets in ``ds``."""
    violations = validate_predictions(t, p)
    if violations:
        raise ValidationFailed(violations)

    by_key = {(row.repeat, row.row_index): row for row in p.rows}
    column = ds.column(t.target)
    if t.is_classification:
        truth_of = lambda i: t.class_labels[column[i]]  # noqa: E731
    else:
        truth_of = lambda i: column[i]  # noqa: E731

    folds: Dict[str, List[FoldScore]] = {m: [] for m in t.measures}
    flags: Dict[str, List[str]] = {m: [] for m in t.measures}
    for r in range(len(t.splits)):
        for f in range(t.procedure.folds):
            test_rows = t.test_rows(r, f)
            if not test_rows:
                continue
            truth = [truth_of(i) for i in test_rows]
            rows = [by_key[(r, i)] for i in test_rows]
            for measure_id in t.measures:
                value, flag = _fold_score(measure_id, t, truth, rows)
                if value is None:
                    flags[measure_id].append(f"fold {r}/{f} skipped: {flag}")
                else:
                    folds[measure_id].append(FoldScore(repeat=r, fold=f, value=value))

    pooled = None
    if t.is_classification:
        rows0 = [i for i, fold in enumerate(t.splits[0]) if fold >= 0]
        cm = confusion(
            [truth_of(i) for i in rows0],
            [by_key[(0, i)].prediction for i in rows0],
            t.class_labels,
        )
        pooled = ConfusionSummary(**cm.to_dict())

    result = EvaluationResult(
        measures={m: _aggregate(m, folds[m], flags[m]) for m in t.measures},
        confusion_matrix=pooled,
    )
    logger.debug("run_evaluated", task_id=t.task_id, n_predictions=len(p.rows))
    return result


def evaluate_solution(t: Task, ds: Dataset, p: PredictionSet) -> EvaluationResult:
    """Flow-less entry point for challenge solutions; same semantics as evaluate_run."""
    return evaluate_run(t, ds, p)
