"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class LadderModelSpec(BaseModel):
    model_id: str
    stage_index: int
    cost_units: float


class LadderSpec(BaseModel):
    models: list[LadderModelSpec]
    num_classes: int | None = None


class TemperatureEntry(BaseModel):
    model_id: str
    T: float
    fit_nll: float = 0.0
    fit_size: int = 0
    pinned: bool = False


class Diagnostic(BaseModel):
    line: int
    reason: str


class ValidateRequest(BaseModel):
    content: str = Field(description="JSONL dump text, header line first")
    strict: bool = True


class ValidateResponse(BaseModel):
    mode: str
    num_classes: int
    num_records: int
    diagnostics: list[Diagnostic]


class AlignRequest(BaseModel):
    content: str
    ladder: LadderSpec
    strict: bool = True


class AlignResponse(BaseModel):
    n_examples: int
    num_stages: int
    mode: str
    groups: list[str]


class FitTemperatureRequest(BaseModel):
    content: str
    ladder: LadderSpec
    group: str | None = None
    t_min: float = 0.05
    t_max: float = 20.0
    tol: float = 1e-4
    strict: bool = True


class FitTemperatureResponse(BaseModel):
    temperatures: list[TemperatureEntry]


class RouteRequest(BaseModel):
    content: str
    ladder: LadderSpec
    temperatures: list[TemperatureEntry] | None = None
    threshold: float
    similarity: str = "constant_zero"
    include_decisions: bool = False
    strict: bool = True


class DecisionEntry(BaseModel):
    example_id: str
    group: str
    stages_visited: list[int]
    per_stage_confidence: list[float]
    chosen_stage: int
    prediction: int | str
    cost: float
    correct: bool | None


class GroupRow(BaseModel):
    n: int
    accuracy: float | None
    mean_cost: float
    speedup: float


class RouteResponse(BaseModel):
    n: int
    mean_cost: float
    speedup: float
    accuracy: float | None
    exit_counts: list[int]
    per_group: dict[str, GroupRow]
    threshold: float
    mode: str
    temperatures: dict[str, float]
    decisions: list[DecisionEntry] | None = None


class SolveRequest(BaseModel):
    content: str
    ladder: LadderSpec
    temperatures: list[TemperatureEntry] | None = None
    target_speedup: float
    rel_tol: float = 0.05
    similarity: str = "constant_zero"
    strict: bool = True


class SolveResponse(BaseModel):
    threshold: float = Field(serialization_alias="lambda")
    achieved_speedup: float
    target_speedup: float
    attainable: bool
    ceiling_speedup: float | None


class SweepRequest(BaseModel):
    content: str
    ladder: LadderSpec
    temperatures: list[TemperatureEntry] | None = None
    grid: list[float] | None = None
    similarity: str = "constant_zero"
    strict: bool = True


class SweepPointEntry(BaseModel):
    threshold: float = Field(serialization_alias="lambda")
    speedup: float
    accuracy: float | None
    mean_cost: float
    exit_histogram: list[int]


class SweepResponse(BaseModel):
    points: list[SweepPointEntry]


class EceRequest(BaseModel):
    confidences: list[float]
    correctness: list[bool]
    num_bins: int = 10


class BinEntry(BaseModel):
    lower: float
    upper: float
    count: int
    mean_confidence: float | None
    accuracy: float | None


class EceResponse(BaseModel):
    ece: float
    ece_percent: float
    n: int
    bins: list[BinEntry]


class DemoRequest(BaseModel):
    seed: int = 0
    targets: list[float] = [2.0, 3.0]
    bins: int = 10


class HealthResponse(BaseModel):
    status: str
    version: str
