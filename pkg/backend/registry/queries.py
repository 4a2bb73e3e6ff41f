"""
Read-only aggregation over a store snapshot: leaderboards, flow overviews,
parameter impact, comparisons, challenge rankings and keyword search.

Every function takes a ``Snapshot`` and never touches disk, so results are a
pure function of the store state they were given.
"""

import math
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel

from backend import numeric
from backend.errors import UnknownParameter
from backend.formats.model import format_number
from backend.measures import get_measure, sort_key
from backend.registry.records import ParamValue, RunRecord
from backend.registry.store import Snapshot

SEARCH_KINDS = ("challenge", "dataset", "flow", "task")


class LeaderboardEntry(BaseModel):
    rank: int
    flow_id: int
    flow: str
    settings: Dict[str, ParamValue]
    run_id: int
    task_id: int
    score: float


class OverviewEntry(BaseModel):
    settings: Dict[str, ParamValue]
    score: Optional[float]
    run_id: int
    n_runs: int
    best: bool = False


class OverviewGroup(BaseModel):
    task_id: int
    task_name: str
    dataset_id: int
    measure: str
    best_score: Optional[float]
    results: List[OverviewEntry]


class FlowOverview(BaseModel):
    flow_id: int
    flow: str
    tasks: List[OverviewGroup]


class ImpactRow(BaseModel):
    value: Optional[ParamValue]
    n_runs: int
    mean_score: float


class ParameterImpact(BaseModel):
    flow_id: int
    parameter: str
    measure: str
    dataset_id: Optional[int] = None
    rows: List[ImpactRow]


class Labelled(BaseModel):
    id: int
    name: str


class Comparison(BaseModel):
    measure: str
    flows: List[Labelled]
    datasets: List[Labelled]
    cells: List[List[Optional[float]]]


class TaskRank(BaseModel):
    task_id: int
    rank: int
    score: Optional[float] = None


class ChallengeEntry(BaseModel):
    rank: int
    participant: str
    kind: str
    flow_id: Optional[int] = None
    mean_rank: float
    task_ranks: List[TaskRank]


class ChallengeLeaderboard(BaseModel):
    challenge_id: int
    name: str
    task_ids: List[int]
    entries: List[ChallengeEntry]


class SearchHit(BaseModel):
    kind: str
    id: int
    name: str
    match_field: str


def _settings(run: RunRecord) -> Dict[str, ParamValue]:
    return {s.name: s.value for s in run.parameter_settings}


def _ranked(runs: Iterable[RunRecord], measure_id: str) -> List[Tuple[float, RunRecord]]:
    """Scored runs, best first; ties go to the earlier upload."""
    scored = [(run.evaluation.mean(measure_id), run) for run in runs]
    scored = [(score, run) for score, run in scored if score is not None]
    scored.sort(key=lambda item: (sort_key(measure_id, item[0]), item[1].upload_time, item[1].run_id))
    return scored


def _best_per(
    scored: List[Tuple[float, RunRecord]], key
) -> List[Tuple[float, RunRecord, int]]:
    """First (best) run per ``key(run)`` with the group size, keeping ranked order."""
    sizes: Dict[object, int] = defaultdict(int)
    for _, run in scored:
        sizes[key(run)] += 1
    seen = set()
    best = []
    for score, run in scored:
        k = key(run)
        if k not in seen:
            seen.add(k)
            best.append((score, run, sizes[k]))
    return best


def _flow_runs_on_dataset(snap: Snapshot, dataset_id: int) -> List[RunRecord]:
    return [
        run
        for run in snap.runs.values()
        if run.flow_id is not None and snap.tasks[run.task_id].task.dataset_id == dataset_id
    ]


def leaderboard(snap: Snapshot, dataset_id: int, measure_id: str) -> List[LeaderboardEntry]:
    """One best entry per (flow, settings) over every task on the dataset."""
    snap.dataset(dataset_id)
    get_measure(measure_id)
    best = _best_per(
        _ranked(_flow_runs_on_dataset(snap, dataset_id), measure_id),
        key=lambda run: (run.flow_id, run.settings_key()),
    )
    return [
        LeaderboardEntry(
            rank=position,
            flow_id=run.flow_id,
            flow=snap.flows[run.flow_id].label,
            settings=_settings(run),
            run_id=run.run_id,
            task_id=run.task_id,
            score=score,
        )
        for position, (score, run, _) in enumerate(best, start=1)
    ]


def flow_overview(snap: Snapshot, flow_id: int) -> FlowOverview:
    flow = snap.flow(flow_id)
    by_task: Dict[int, List[RunRecord]] = defaultdict(list)
    for run in snap.runs.values():
        if run.flow_id == flow_id:
            by_task[run.task_id].append(run)

    groups = []
    for task_id in sorted(by_task):
        task = snap.tasks[task_id].task
        measure = task.primary_measure
        runs = by_task[task_id]
        ranked = _best_per(_ranked(runs, measure), key=RunRecord.settings_key)
        results = [
            OverviewEntry(settings=_settings(run), score=score, run_id=run.run_id, n_runs=n)
            for score, run, n in ranked
        ]
        # settings whose runs carry no primary score still show up, unscored, last
        scored_keys = {run.settings_key() for _, run, _ in ranked}
        unscored: Dict[tuple, List[RunRecord]] = defaultdict(list)
        for run in sorted(runs, key=lambda r: r.run_id):
            if run.settings_key() not in scored_keys:
                unscored[run.settings_key()].append(run)
        for members in unscored.values():
            results.append(
                OverviewEntry(
                    settings=_settings(members[0]),
                    score=None,
                    run_id=members[0].run_id,
                    n_runs=len(members),
                )
            )
        if ranked:
            results[0].best = True
        groups.append(
            OverviewGroup(
                task_id=task_id,
                task_name=task.name,
                dataset_id=task.dataset_id,
                measure=measure,
                best_score=ranked[0][0] if ranked else None,
                results=results,
            )
        )
    return FlowOverview(flow_id=flow_id, flow=flow.label, tasks=groups)


def _value_order(value: Optional[ParamValue]) -> tuple:
    if value is None:
        return (0, 0, "")
    if isinstance(value, (bool, int, float)):
        return (1, float(value), "")
    return (2, 0, value)


def parameter_impact(
    snap: Snapshot,
    flow_id: int,
    parameter: str,
    measure_id: str,
    dataset_id: Optional[int] = None,
) -> ParameterImpact:
    """Mean run score per value of one parameter; unset settings fall back to the default."""
    flow = snap.flow(flow_id)
    spec = flow.parameter(parameter)
    if spec is None:
        raise UnknownParameter(parameter)
    get_measure(measure_id)
    if dataset_id is not None:
        snap.dataset(dataset_id)

    groups: Dict[object, List[float]] = defaultdict(list)
    values: Dict[object, Optional[ParamValue]] = {}
    for run in snap.runs.values():
        if run.flow_id != flow_id:
            continue
        if dataset_id is not None and snap.tasks[run.task_id].task.dataset_id != dataset_id:
            continue
        score = run.evaluation.mean(measure_id)
        if score is None:
            continue
        value = run.setting(parameter)
        if value is None:
            value = spec.default
        key = (type(value).__name__, repr(value))
        values[key] = value
        groups[key].append(score)

    rows = [
        ImpactRow(value=values[key], n_runs=len(scores), mean_score=numeric.mean(scores))
        for key, scores in groups.items()
    ]
    rows.sort(key=lambda row: _value_order(row.value))
    return ParameterImpact(
        flow_id=flow_id, parameter=parameter, measure=measure_id, dataset_id=dataset_id, rows=rows
    )


def compare(
    snap: Snapshot, flow_ids: Sequence[int], dataset_ids: Sequence[int], measure_id: str
) -> Comparison:
    """Best mean score of each flow on each dataset; ``None`` marks an empty cell."""
    flows = [snap.flow(f) for f in flow_ids]
    datasets = [snap.dataset(d) for d in dataset_ids]
    get_measure(measure_id)

    cells = []
    for flow in flows:
        row = []
        for dataset in datasets:
            ranked = _ranked(
                (
                    run
                    for run in _flow_runs_on_dataset(snap, dataset.dataset_id)
                    if run.flow_id == flow.flow_id
                ),
                measure_id,
            )
            row.append(ranked[0][0] if ranked else None)
        cells.append(row)
    return Comparison(
        measure=measure_id,
        flows=[Labelled(id=f.flow_id, name=f.label) for f in flows],
        datasets=[Labelled(id=d.dataset_id, name=f"{d.name} v{d.version}") for d in datasets],
        cells=cells,
    )


def comparison_frame(table: Comparison) -> pd.DataFrame:
    frame = pd.DataFrame(
        [["" if cell is None else format_number(cell) for cell in row] for row in table.cells],
        columns=[d.name for d in table.datasets],
        dtype=object,
    )
    frame.insert(0, "flow", [f.name for f in table.flows])
    return frame


def comparison_csv(table: Comparison) -> str:
    """Plot-ready export: one row per flow, one column per dataset."""
    return comparison_frame(table).to_csv(index=False, lineterminator="\n")


def _participant(snap: Snapshot, run: RunRecord) -> Tuple[str, str, Optional[int]]:
    if run.flow_id is not None:
        return ("flow", snap.flows[run.flow_id].label, run.flow_id)
    return ("solution", run.solution_name, None)


def challenge_leaderboard(snap: Snapshot, challenge_id: int) -> ChallengeLeaderboard:
    """Mean per-task rank; a missing task counts as (participants on that task + 1)."""
    challenge = snap.challenge(challenge_id)
    task_tables: Dict[int, Dict[tuple, Tuple[int, float]]] = {}
    participants = set()
    for task_id in challenge.task_ids:
        task = snap.tasks[task_id].task
        runs = [
            run
            for run in snap.runs.values()
            if run.task_id == task_id
            and (run.flow_id is not None or run.challenge_id == challenge_id)
        ]
        best = _best_per(_ranked(runs, task.primary_measure), key=lambda r: _participant(snap, r))
        table = {}
        for position, (score, run, _) in enumerate(best, start=1):
            who = _participant(snap, run)
            table[who] = (position, score)
            participants.add(who)
        task_tables[task_id] = table

    rows = []
    for who in participants:
        task_ranks = []
        for task_id in challenge.task_ids:
            table = task_tables[task_id]
            if who in table:
                rank, score = table[who]
                task_ranks.append(TaskRank(task_id=task_id, rank=rank, score=score))
            else:
                task_ranks.append(TaskRank(task_id=task_id, rank=len(table) + 1))
        mean_rank = math.fsum(r.rank for r in task_ranks) / len(task_ranks)
        rows.append((mean_rank, who, task_ranks))
    rows.sort(key=lambda row: (row[0], row[1][1], row[1][0]))

    entries = [
        ChallengeEntry(
            rank=position,
            participant=who[1],
            kind=who[0],
            flow_id=who[2],
            mean_rank=mean_rank,
            task_ranks=task_ranks,
        )
        for position, (mean_rank, who, task_ranks) in enumerate(rows, start=1)
    ]
    return ChallengeLeaderboard(
        challenge_id=challenge_id,
        name=challenge.name,
        task_ids=list(challenge.task_ids),
        entries=entries,
    )


def _match(query: str, fields: Sequence[Tuple[str, str]]) -> Optional[str]:
    for field_name, text in fields:
        if text and query in text.lower():
            return field_name
    return None


def search(snap: Snapshot, query: str) -> List[SearchHit]:
    """Case-insensitive substring search over names and descriptions."""
    needle = query.strip().lower()
    if not needle:
        return []
    candidates = []
    for c in snap.challenges.values():
        candidates.append(("challenge", c.challenge_id, c.name, [("name", c.name), ("description", c.description)]))
    for d in snap.datasets.values():
        candidates.append(("dataset", d.dataset_id, d.name, [("name", d.name), ("description", d.description)]))
    for f in snap.flows.values():
        candidates.append(("flow", f.flow_id, f.name, [("name", f.name), ("description", f.description)]))
    for t in snap.tasks.values():
        candidates.append(("task", t.task_id, t.task.name, [("name", t.task.name)]))

    hits = []
    for kind, ident, name, fields in candidates:
        matched = _match(needle, fields)
        if matched is not None:
            hits.append(SearchHit(kind=kind, id=ident, name=name, match_field=matched))
    hits.sort(key=lambda hit: (SEARCH_KINDS.index(hit.kind), hit.id))
    return hits


def list_records(
    snap: Snapshot,
    entity: str,
    limit: int = 100,
    offset: int = 0,
    task_id: Optional[int] = None,
    flow_id: Optional[int] = None,
) -> list:
    records = [getattr(snap, entity)[key] for key in sorted(getattr(snap, entity))]
    if entity == "runs":
        if task_id is not None:
            records = [r for r in records if r.task_id == task_id]
        if flow_id is not None:
            records = [r for r in records if r.flow_id == flow_id]
    return records[offset : offset + limit]


def check_runs(snap: Snapshot) -> List[str]:
    """Full referential-integrity scan; returns one message per broken link."""
    problems = []
    for run in snap.runs.values():
        if run.task_id not in snap.tasks:
            problems.append(f"run {run.run_id}: task {run.task_id} missing")
        if run.flow_id is not None:
            flow = snap.flows.get(run.flow_id)
            if flow is None:
                problems.append(f"run {run.run_id}: flow {run.flow_id} missing")
                continue
            for setting in run.parameter_settings:
                if flow.parameter(setting.name) is None:
                    problems.append(f"run {run.run_id}: unknown parameter {setting.name}")
    return problems


__all__ = [
    "ChallengeLeaderboard",
    "Comparison",
    "FlowOverview",
    "LeaderboardEntry",
    "ParameterImpact",
    "SearchHit",
    "challenge_leaderboard",
    "check_runs",
    "compare",
    "comparison_csv",
    "flow_overview",
    "leaderboard",
    "list_records",
    "parameter_impact",
    "search",
]
