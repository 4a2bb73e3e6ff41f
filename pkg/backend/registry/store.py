"""
On-disk experiment store.

Layout under the store root::

    log/{datasets,flows,tasks,challenges,runs}.jsonl   one record per line
    blobs/<sha256 hex>                                 content-addressed bytes

Every mutation runs on the store's single writer thread: it appends to the
log, fsyncs, then publishes a new immutable ``Snapshot``. Readers grab the
current snapshot reference and never lock.
"""

from __future__ import annotations

import functools
import hashlib
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import structlog
from pydantic import BaseModel, ValidationError

from backend import tasks as task_engine
from backend.errors import (
    BlobIntegrityError,
    CorruptRecord,
    DuplicateParameter,
    EmptyChallenge,
    ExpDBError,
    FlowConflict,
    InvalidParameterValue,
    InvalidTaskDefinition,
    NotAChallengeTask,
    ParseFailed,
    UnknownAttribute,
    UnknownChallenge,
    UnknownDataset,
    UnknownFlow,
    UnknownParameter,
    UnknownRun,
    UnknownTask,
)
from backend.evaluation import (
    PredictionSet,
    evaluate_run,
    evaluate_solution,
    parse_prediction_csv,
    write_prediction_csv,
)
from backend.formats import READABLE, Dataset, read_dataset
from backend.metadata import compute_meta_features
from backend.registry.records import (
    ChallengeRecord,
    DatasetRecord,
    FlowRecord,
    FlowSpec,
    ParameterSetting,
    ParameterSpec,
    ParamValue,
    RunRecord,
    TaskRecord,
)
from backend.registry.writer import WriteQueue
from backend.tasks import EstimationProcedure

logger = structlog.get_logger(__name__)

# replay order follows the reference graph
ENTITIES: Tuple[str, ...] = ("datasets", "flows", "tasks", "challenges", "runs")

RECORD_TYPES = {
    "datasets": DatasetRecord,
    "flows": FlowRecord,
    "tasks": TaskRecord,
    "challenges": ChallengeRecord,
    "runs": RunRecord,
}

ID_FIELDS = {
    "datasets": "dataset_id",
    "flows": "flow_id",
    "tasks": "task_id",
    "challenges": "challenge_id",
    "runs": "run_id",
}

# decoded datasets kept in memory per store
DATASET_CACHE_SIZE = 32

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _empty() -> Mapping:
    return MappingProxyType({})


@dataclass(frozen=True)
class Snapshot:
    """An immutable view of every record, keyed by id."""

    datasets: Mapping[int, DatasetRecord] = field(default_factory=_empty)
    flows: Mapping[int, FlowRecord] = field(default_factory=_empty)
    tasks: Mapping[int, TaskRecord] = field(default_factory=_empty)
    challenges: Mapping[int, ChallengeRecord] = field(default_factory=_empty)
    runs: Mapping[int, RunRecord] = field(default_factory=_empty)

    def with_record(self, entity: str, record_id: int, record: BaseModel) -> "Snapshot":
        current = getattr(self, entity)
        return replace(self, **{entity: MappingProxyType({**current, record_id: record})})

    def next_id(self, entity: str) -> int:
        return max(getattr(self, entity), default=0) + 1

    def dataset(self, dataset_id: int) -> DatasetRecord:
        try:
            return self.datasets[dataset_id]
        except KeyError:
            raise UnknownDataset(dataset_id) from None

    def flow(self, flow_id: int) -> FlowRecord:
        try:
            return self.flows[flow_id]
        except KeyError:
            raise UnknownFlow(flow_id) from None

    def task(self, task_id: int) -> TaskRecord:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownTask(task_id) from None

    def run(self, run_id: int) -> RunRecord:
        try:
            return self.runs[run_id]
        except KeyError:
            raise UnknownRun(run_id) from None

    def challenge(self, challenge_id: int) -> ChallengeRecord:
        try:
            return self.challenges[challenge_id]
        except KeyError:
            raise UnknownChallenge(challenge_id) from None

    def references_resolve(self, entity: str, record: BaseModel) -> bool:
        if entity == "tasks":
            return record.task.dataset_id in self.datasets
        if entity == "challenges":
            return all(t in self.tasks for t in record.task_ids)
        if entity == "runs":
            if record.task_id not in self.tasks:
                return False
            if record.flow_id is not None and record.flow_id not in self.flows:
                return False
            if record.challenge_id is not None and record.challenge_id not in self.challenges:
                return False
            return record.flow_id is not None or record.solution_name is not None
        return True


class Registration(NamedTuple):
    record: Any
    created: bool


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _now() -> datetime:
    return datetime.now(timezone.utc)


class BlobStore:
    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, digest: str) -> Path:
        return self.root / digest

    def put(self, data: bytes) -> str:
        digest = sha256_hex(data)
        target = self.path(digest)
        if target.exists():
            return digest
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return digest

    def get(self, digest: str) -> bytes:
        try:
            data = self.path(digest).read_bytes()
        except FileNotFoundError:
            raise BlobIntegrityError(f"blob {digest} is missing", [digest]) from None
        if sha256_hex(data) != digest:
            raise BlobIntegrityError(f"blob {digest} does not match its digest", [digest])
        return data


class EntityLog:
    """Append-only JSON-lines log for one entity kind."""

    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch(exist_ok=True)

    @property
    def name(self) -> str:
        return self.path.name

    def append(self, record: BaseModel) -> None:
        line = record.model_dump_json().encode("utf-8") + b"\n"
        with open(self.path, "ab") as handle:
            handle.write(line)
            handle.flush()
            os.fsync(handle.fileno())

    def replay(self, model: type) -> List[BaseModel]:
        """Parse every complete line; a partial trailing line is cut off the file."""
        data = self.path.read_bytes()
        complete = data.rfind(b"\n") + 1
        if complete < len(data):
            logger.warning(
                "partial_line_discarded",
                log=self.name,
                offset=complete,
                n_bytes=len(data) - complete,
            )
            with open(self.path, "r+b") as handle:
                handle.truncate(complete)
                handle.flush()
                os.fsync(handle.fileno())

        records = []
        for lineno, line in enumerate(data[:complete].split(b"\n")[:-1], start=1):
            if not line.strip():
                continue
            try:
                records.append(model.model_validate_json(line))
            except ValidationError as exc:
                error = CorruptRecord(self.name, lineno, f"{exc.error_count()} validation error(s)")
                logger.warning("corrupt_record_skipped", log=self.name, line=lineno, error=error.message)
        return records


def coerce_setting(spec: ParameterSpec, value: Any) -> ParamValue:
    """Coerce ``value`` to the parameter's declared kind."""

    def invalid() -> InvalidParameterValue:
        return InvalidParameterValue(
            f"parameter {spec.name!r} expects {spec.kind}, got {value!r}",
            [{"name": spec.name, "kind": spec.kind, "value": value}],
        )

    if spec.kind == "flag":
        if isinstance(value, bool):
            return value
        if isinstance(value, int) and value in (0, 1):
            return bool(value)
        if isinstance(value, str) and value.strip().lower() in _TRUE | _FALSE:
            return value.strip().lower() in _TRUE
        raise invalid()
    if spec.kind == "text":
        if isinstance(value, str):
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return str(value)
        raise invalid()
    if isinstance(value, bool):
        raise invalid()
    if spec.kind == "int":
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                return int(value.strip())
            except ValueError:
                raise invalid() from None
        raise invalid()
    # float
    if isinstance(value, (int, float)):
        number = float(value)
    elif isinstance(value, str):
        try:
            number = float(value.strip())
        except ValueError:
            raise invalid() from None
    else:
        raise invalid()
    if not math.isfinite(number):
        raise invalid()
    return number


def _normalize_flow(spec: FlowSpec) -> FlowSpec:
    seen = set()
    parameters = []
    for parameter in spec.parameters:
        if parameter.name in seen:
            raise DuplicateParameter(parameter.name)
        seen.add(parameter.name)
        default = parameter.default
        if default is not None:
            default = coerce_setting(parameter, default)
        parameters.append(ParameterSpec(name=parameter.name, kind=parameter.kind, default=default))
    return spec.model_copy(update={"parameters": parameters})


class Store:
    """The experiment database: durable records, blobs and the aggregation queries."""

    def __init__(self, root: Union[str, Path], dataset_cache_size: int = DATASET_CACHE_SIZE):
        self.root = Path(root)
        self.blobs = BlobStore(self.root / "blobs")
        self.logs = {entity: EntityLog(self.root / "log" / f"{entity}.jsonl") for entity in ENTITIES}
        self._snapshot = Snapshot()
        self._decoded = functools.lru_cache(maxsize=dataset_cache_size)(self._decode)
        self._writer = WriteQueue()

    # lifecycle

    def recover(self) -> Snapshot:
        """Rebuild every index by replaying the logs."""
        snapshot = Snapshot()
        for entity in ENTITIES:
            id_field = ID_FIELDS[entity]
            kept = 0
            for record in self.logs[entity].replay(RECORD_TYPES[entity]):
                record_id = (
                    record.task.task_id if entity == "tasks" else getattr(record, id_field)
                )
                if record_id in getattr(snapshot, entity):
                    logger.warning("duplicate_record_skipped", log=entity, record_id=record_id)
                    continue
                if not snapshot.references_resolve(entity, record):
                    logger.warning("dangling_record_skipped", log=entity, record_id=record_id)
                    continue
                snapshot = snapshot.with_record(entity, record_id, record)
                kept += 1
            logger.debug("log_replayed", log=entity, records=kept)
        self._snapshot = snapshot
        return snapshot

    def open(self) -> "Store":
        self.recover()
        self._writer.start_worker()
        logger.info("store_opened", root=str(self.root), **self.counts())
        return self

    def close(self) -> None:
        self._writer.stop_worker()
        logger.info("store_closed", root=str(self.root))

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def counts(self) -> Dict[str, int]:
        snap = self._snapshot
        return {entity: len(getattr(snap, entity)) for entity in ENTITIES}

    def _commit(self, entity: str, record_id: int, record: BaseModel) -> None:
        """Writer thread only: append, then publish."""
        self.logs[entity].append(record)
        self._snapshot = self._snapshot.with_record(entity, record_id, record)

    # blobs and datasets

    def get_dataset_blob(self, dataset_id: int) -> Tuple[DatasetRecord, bytes]:
        record = self._snapshot.dataset(dataset_id)
        return record, self.blobs.get(record.digest)

    def load_dataset(self, dataset_id: int) -> Dataset:
        record = self._snapshot.dataset(dataset_id)
        return self._decoded(record.digest, record.format)

    def _decode(self, digest: str, format: str) -> Dataset:
        return read_dataset(self.blobs.get(digest), format)

    def get_predictions(self, run_id: int) -> str:
        return self.blobs.get(self._snapshot.run(run_id).predictions_digest).decode("utf-8")

    # mutations

    def register_dataset(
        self,
        blob: bytes,
        format: str,
        name: str,
        default_target: Optional[str] = None,
        description: str = "",
    ) -> Registration:
        if format not in READABLE:
            raise ParseFailed(f"unsupported upload format {format!r}", [{"format": format}])
        if not name:
            raise ParseFailed("a dataset name is required")
        blob = bytes(blob)
        try:
            ds = read_dataset(blob, format)
        except ExpDBError as exc:
            raise ParseFailed(exc.message, [{"code": exc.code, "message": exc.message}]) from None
        if default_target is not None and not ds.has_attribute(default_target):
            raise UnknownAttribute(default_target)
        meta = compute_meta_features(ds, default_target)
        digest = sha256_hex(blob)

        def write() -> Registration:
            snap = self._snapshot
            versions = [r for r in snap.datasets.values() if r.name == name]
            for existing in versions:
                if existing.digest == digest:
                    return Registration(existing, False)
            self.blobs.put(blob)
            record = DatasetRecord(
                dataset_id=snap.next_id("datasets"),
                name=name,
                version=max((r.version for r in versions), default=0) + 1,
                description=description,
                format=format,
                digest=digest,
                meta_features=meta,
                upload_time=_now(),
                default_target=default_target,
            )
            self._commit("datasets", record.dataset_id, record)
            logger.info(
                "dataset_registered", dataset_id=record.dataset_id, name=name, version=record.version
            )
            return Registration(record, True)

        return self._writer.submit(write)

    def register_flow(self, spec: Union[FlowSpec, dict]) -> Registration:
        if not isinstance(spec, FlowSpec):
            spec = FlowSpec.model_validate(spec)
        spec = _normalize_flow(spec)

        def write() -> Registration:
            snap = self._snapshot
            for existing in snap.flows.values():
                if (existing.name, existing.version) != (spec.name, spec.version):
                    continue
                if (
                    existing.parameters == spec.parameters
                    and existing.properties == spec.properties
                ):
                    return Registration(existing, False)
                raise FlowConflict(
                    f"flow {spec.name} {spec.version} is already registered with a different schema",
                    [{"flow_id": existing.flow_id}],
                )
            record = FlowRecord(
                flow_id=snap.next_id("flows"), upload_time=_now(), **spec.model_dump()
            )
            self._commit("flows", record.flow_id, record)
            logger.info("flow_registered", flow_id=record.flow_id, name=record.name, version=record.version)
            return Registration(record, True)

        return self._writer.submit(write)

    def create_task(
        self,
        dataset_id: int,
        target: Optional[str] = None,
        type: Optional[str] = None,
        procedure: Optional[Union[EstimationProcedure, dict]] = None,
        measures: Optional[List[str]] = None,
        input_features: Optional[List[str]] = None,
    ) -> TaskRecord:
        record = self._snapshot.dataset(dataset_id)
        target = target or record.default_target
        if target is None:
            raise InvalidTaskDefinition("no target given and the dataset has no default target")
        if isinstance(procedure, dict):
            procedure = EstimationProcedure.model_validate(procedure)
        ds = self.load_dataset(dataset_id)

        def write() -> TaskRecord:
            task_id = self._snapshot.next_id("tasks")
            task = task_engine.create_task(
                ds,
                dataset_id,
                target,
                type,
                procedure,
                task_id=task_id,
                measures=measures,
                input_features=input_features,
                dataset_name=record.name,
            )
            stored = TaskRecord(task=task, upload_time=_now())
            self._commit("tasks", task_id, stored)
            logger.info("task_created", task_id=task_id, dataset_id=dataset_id, target=target)
            return stored

        return self._writer.submit(write)

    def _coerce_settings(self, flow: FlowRecord, settings: Any) -> List[ParameterSetting]:
        if settings is None:
            pairs: Sequence = []
        elif isinstance(settings, Mapping):
            pairs = list(settings.items())
        else:
            pairs = [
                (s.name, s.value) if isinstance(s, ParameterSetting) else (s["name"], s["value"])
                for s in settings
            ]
        coerced = {}
        for name, value in pairs:
            spec = flow.parameter(name)
            if spec is None:
                raise UnknownParameter(name)
            if name in coerced:
                raise DuplicateParameter(name)
            coerced[name] = coerce_setting(spec, value)
        return [ParameterSetting(name=n, value=coerced[n]) for n in sorted(coerced)]

    def _predictions(self, task: task_engine.Task, predictions: Union[PredictionSet, str]) -> PredictionSet:
        if isinstance(predictions, PredictionSet):
            return predictions
        return parse_prediction_csv(predictions, task)

    def _store_run(self, **fields) -> RunRecord:
        def write() -> RunRecord:
            blob = fields.pop("predictions_blob")
            digest = self.blobs.put(blob)
            record = RunRecord(
                run_id=self._snapshot.next_id("runs"),
                predictions_digest=digest,
                upload_time=_now(),
                **fields,
            )
            self._commit("runs", record.run_id, record)
            logger.info(
                "run_stored",
                run_id=record.run_id,
                task_id=record.task_id,
                flow_id=record.flow_id,
                solution=record.solution_name,
            )
            return record

        return self._writer.submit(write)

    def submit_run(
        self,
        task_id: int,
        flow_id: int,
        settings: Any,
        predictions: Union[PredictionSet, str],
    ) -> RunRecord:
        snap = self._snapshot
        task = snap.task(task_id).task
        flow = snap.flow(flow_id)
        parameter_settings = self._coerce_settings(flow, settings)
        prediction_set = self._predictions(task, predictions)
        evaluation = evaluate_run(task, self.load_dataset(task.dataset_id), prediction_set)
        return self._store_run(
            task_id=task_id,
            flow_id=flow_id,
            parameter_settings=parameter_settings,
            evaluation=evaluation,
            predictions_blob=write_prediction_csv(prediction_set, task).encode("utf-8"),
        )

    def create_challenge(
        self, name: str, task_ids: Sequence[int], description: str = ""
    ) -> ChallengeRecord:
        if not task_ids:
            raise EmptyChallenge()
        task_ids = list(dict.fromkeys(task_ids))
        for task_id in task_ids:
            self._snapshot.task(task_id)

        def write() -> ChallengeRecord:
            record = ChallengeRecord(
                challenge_id=self._snapshot.next_id("challenges"),
                name=name,
                description=description,
                task_ids=task_ids,
                upload_time=_now(),
            )
            self._commit("challenges", record.challenge_id, record)
            logger.info("challenge_created", challenge_id=record.challenge_id, tasks=task_ids)
            return record

        return self._writer.submit(write)

    def submit_solution(
        self,
        challenge_id: int,
        task_id: int,
        name: str,
        predictions: Union[PredictionSet, str],
    ) -> RunRecord:
        snap = self._snapshot
        challenge = snap.challenge(challenge_id)
        if task_id not in challenge.task_ids:
            raise NotAChallengeTask(
                f"task {task_id} is not part of challenge {challenge_id}",
                [{"task_id": task_id, "challenge_id": challenge_id}],
            )
        if not name:
            raise ParseFailed("a solution needs a name")
        task = snap.task(task_id).task
        prediction_set = self._predictions(task, predictions)
        evaluation = evaluate_solution(task, self.load_dataset(task.dataset_id), prediction_set)
        return self._store_run(
            task_id=task_id,
            solution_name=name,
            challenge_id=challenge_id,
            evaluation=evaluation,
            predictions_blob=write_prediction_csv(prediction_set, task).encode("utf-8"),
        )


def open_store(root: Union[str, Path]) -> Store:
    """Open (creating if needed) the store at ``root`` and recover its indices."""
    return Store(root).open()
