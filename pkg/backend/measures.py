"""Known evaluation measures, their task type and their ranking direction."""

from dataclasses import dataclass
from typing import Dict, List

from backend.errors import UnknownMeasure

CLASSIFICATION = "supervised_classification"
REGRESSION = "supervised_regression"


@dataclass(frozen=True)
class MeasureSpec:
    measure_id: str
    task_type: str
    higher_is_better: bool


MEASURES: Dict[str, MeasureSpec] = {
    spec.measure_id: spec
    for spec in (
        MeasureSpec("predictive_accuracy", CLASSIFICATION, True),
        MeasureSpec("precision_macro", CLASSIFICATION, True),
        MeasureSpec("recall_macro", CLASSIFICATION, True),
        MeasureSpec("f_measure_macro", CLASSIFICATION, True),
        MeasureSpec("area_under_roc_curve", CLASSIFICATION, True),
        MeasureSpec("root_mean_squared_error", REGRESSION, False),
        MeasureSpec("mean_absolute_error", REGRESSION, False),
    )
}

DEFAULT_MEASURES: Dict[str, List[str]] = {
    CLASSIFICATION: ["predictive_accuracy", "f_measure_macro", "area_under_roc_curve"],
    REGRESSION: ["root_mean_squared_error", "mean_absolute_error"],
}


def get_measure(measure_id: str) -> MeasureSpec:
    try:
        return MEASURES[measure_id]
    except KeyError:
        raise UnknownMeasure(measure_id) from None


def check_measures(measure_ids: List[str], task_type: str) -> List[str]:
    if not measure_ids:
        raise UnknownMeasure(measure_ids, "at least one measure is required")
    for measure_id in measure_ids:
        if get_measure(measure_id).task_type != task_type:
            raise UnknownMeasure(measure_id, f"measure not valid for {task_type}")
    return list(measure_ids)


def better(measure_id: str, a: float, b: float) -> bool:
    """True when score ``a`` ranks strictly ahead of ``b``."""
    return a > b if get_measure(measure_id).higher_is_better else a < b


def sort_key(measure_id: str, score: float) -> float:
    """Ascending sort key that puts the best score first."""
    return -score if get_measure(measure_id).higher_is_better else score
