"""Request and response bodies of the REST API."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from backend.evaluation import EvaluationResult
from backend.tasks import EstimationProcedure


class TaskRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset_id: int
    target: Optional[str] = None
    type: Optional[str] = None
    procedure: Optional[EstimationProcedure] = None
    measures: Optional[List[str]] = None
    input_features: Optional[List[str]] = None


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task_id: int
    flow_id: int
    settings: Dict[str, Any] = {}
    predictions: str


class ChallengeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    task_ids: List[int]
    description: str = ""


class SolutionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task_id: int
    name: str = Field(min_length=1)
    predictions: str


class DatasetCreated(BaseModel):
    dataset_id: int
    name: str
    version: int


class FlowCreated(BaseModel):
    flow_id: int
    name: str
    version: str


class RunCreated(BaseModel):
    run_id: int
    task_id: int
    flow_id: Optional[int] = None
    solution_name: Optional[str] = None
    challenge_id: Optional[int] = None
    evaluation: EvaluationResult


class TaskSummary(BaseModel):
    task_id: int
    name: str
    type: str
    dataset_id: int
    target: str


class HealthResponse(BaseModel):
    status: str
    version: str
    counts: Dict[str, int]
