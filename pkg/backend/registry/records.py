"""Persistent record types, one JSON document per log line."""

from datetime import datetime
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field

from backend.evaluation import EvaluationResult
from backend.metadata import MetaFeatureSet
from backend.tasks import Task

ParamValue = Union[bool, int, float, str]
ParamKind = Literal["int", "float", "text", "flag"]


class DatasetRecord(BaseModel):
    dataset_id: int
    name: str = Field(min_length=1)
    version: int = Field(ge=1)
    description: str = ""
    format: Literal["arff", "mld"]
    digest: str
    meta_features: MetaFeatureSet
    upload_time: datetime
    default_target: Optional[str] = None


class ParameterSpec(BaseModel):
    name: str = Field(min_length=1)
    kind: ParamKind
    default: Optional[ParamValue] = None


class FlowProperties(BaseModel):
    task_types: List[str] = []
    handles_missing: bool = False
    handles_nominal: bool = False


class FlowSpec(BaseModel):
    """The caller-supplied part of a flow."""

    name: str = Field(min_length=1)
    version: str = Field(min_length=1)
    description: str = ""
    parameters: List[ParameterSpec] = []
    properties: FlowProperties = FlowProperties()


class FlowRecord(FlowSpec):
    flow_id: int
    upload_time: datetime

    @property
    def label(self) -> str:
        return f"{self.name} {self.version}"

    def parameter(self, name: str) -> Optional[ParameterSpec]:
        return next((p for p in self.parameters if p.name == name), None)


class TaskRecord(BaseModel):
    task: Task
    upload_time: datetime

    @property
    def task_id(self) -> int:
        return self.task.task_id


class ParameterSetting(BaseModel):
    name: str
    value: ParamValue


class RunRecord(BaseModel):
    run_id: int
    task_id: int
    flow_id: Optional[int] = None
    solution_name: Optional[str] = None
    challenge_id: Optional[int] = None
    parameter_settings: List[ParameterSetting] = []
    evaluation: EvaluationResult
    predictions_digest: str
    upload_time: datetime

    def setting(self, name: str) -> Optional[ParamValue]:
        return next((s.value for s in self.parameter_settings if s.name == name), None)

    def settings_key(self) -> tuple:
        return tuple((s.name, repr(s.value)) for s in self.parameter_settings)


class ChallengeRecord(BaseModel):
    challenge_id: int
    name: str = Field(min_length=1)
    description: str = ""
    task_ids: List[int] = Field(min_length=1)
    aggregate_rule: Literal["mean-rank"] = "mean-rank"
    upload_time: datetime
