"""Pydantic request/response models for the service API."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class PassAtKRequest(BaseModel):
    n: int
    c: int
    k: int


class PassAtKResponse(BaseModel):
    value: float


class ImprovementRequest(BaseModel):
    series: list[tuple[int, float]]


class ImprovementResponse(BaseModel):
    initial: float
    max: float
    iters_to_max: int
    avg_per_iter: float


class RenderFeedbackRequest(BaseModel):
    f_binary: int
    f_text: Optional[str] = None


class RenderFeedbackResponse(BaseModel):
    text: str


class ParseSequenceRequest(BaseModel):
    sequence: str


class ParseSequenceResponse(BaseModel):
    f_binary: int
    f_text: Optional[str]
    instruction: str
    solution_text: str


class SampleRequest(BaseModel):
    config: dict[str, Any]
    iteration: int = 0
    out_path: Optional[str] = None
    limit_problems: Optional[int] = None


class SampleResponse(BaseModel):
    count: int
    out_path: Optional[str] = None
    samples: Optional[list[dict]] = None


class EvaluateRequest(BaseModel):
    config: dict[str, Any]
    samples_path: Optional[str] = None
    samples: Optional[list[dict]] = None
    out_path: Optional[str] = None


class EvaluateResponse(BaseModel):
    count: int
    passed: int
    error_distribution: dict[str, int]
    out_path: Optional[str] = None
    feedback: Optional[list[dict]] = None


class BuildFcftRequest(BaseModel):
    config: dict[str, Any]
    samples_path: str
    feedback_path: str
    iteration: int = 0
    out_path: Optional[str] = None


class BuildFcftResponse(BaseModel):
    records: int
    good: int
    out_path: Optional[str] = None


class LoopRequest(BaseModel):
    config: dict[str, Any]
    resume_run_dir: Optional[str] = None


class LoopResponse(BaseModel):
    run_id: str
    run_dir: str
    status: str
    pass1_series: list[tuple[int, float]]
    iterations: int


class ReportRequest(BaseModel):
    run_dir: str


class ReportResponse(BaseModel):
    json_path: str
    csv_path: str
    pass1_series: list[tuple[int, float]]
    improvement: Optional[ImprovementResponse] = None


class OntologyModel(BaseModel):
    event_type: str
    roles: list[dict]  # {"name": str, "entity_types": [str]}


class PredictionModel(BaseModel):
    arguments: list[dict] = Field(default_factory=list)  # {role, span, entity_type?}


class GoldModel(BaseModel):
    arguments: list[dict] = Field(default_factory=list)  # {role, span}


class EaeEvaluateRequest(BaseModel):
    ontology: OntologyModel
    prediction: Optional[PredictionModel] = None
    code: Optional[str] = None
    gold: GoldModel


class EaeEvaluateResponse(BaseModel):
    f_binary: int
    f_text: Optional[str]
    error_class: str


class PRF(BaseModel):
    precision: float
    recall: float
    f1: float


class EaeScoreRequest(BaseModel):
    predictions: list[PredictionModel]
    golds: list[GoldModel]


class EaeScoreResponse(BaseModel):
    arg_i: PRF
    arg_c: PRF


class ErrorResponse(BaseModel):
    detail: str
    kind: str
