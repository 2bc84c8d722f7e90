"""Wire models for the HTTP service.

Every request model forbids unknown fields so client typos fail loudly
(422) instead of being ignored. Response models mirror the core
dataclasses' ``to_dict`` shapes where those exist.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InstanceModel(_Request):
    """A WSD instance as it crosses the wire (matches the corpus JSONL row)."""

    instance_id: str
    sentence: str
    lemma: str
    pos: str
    gold_sense_id: str | None = None
    source: str = "user"
    candidates: list[str] | None = None


class MockResponseLine(BaseModel):
    """One scripted gateway reply: positional unless ``when_contains`` is set."""

    model_config = ConfigDict(extra="forbid")

    text: str
    when_contains: str | None = None
    finish_reason: str = "stop"


class HealthResponse(BaseModel):
    status: str
    version: str


class SampleRequest(_Request):
    corpus: str
    counts: dict[str, int]
    seed: int
    out: str | None = None


class SampleResponse(BaseModel):
    instances: list[InstanceModel]
    count: int
    written: str | None = None


class BuildDatasetRequest(_Request):
    variant: str
    corpus: str | None = None
    instances: list[InstanceModel] | None = None
    out: str | None = None
    overwrite: bool = False
    mock_responses: str | None = None
    mock: list[MockResponseLine] | None = None
    judge: bool = False
    model: str | None = None
    window: int | None = None
    top_k: int | None = None


class BuildErrorModel(BaseModel):
    instance_id: str
    reason: str


class TokenStatsModel(BaseModel):
    max: int
    avg: float


class DatasetStatsModel(BaseModel):
    count: int
    input_tokens: TokenStatsModel
    output_tokens: TokenStatsModel
    counter: str


class BuildDatasetResponse(BaseModel):
    variant: str
    built: int
    errors: list[BuildErrorModel]
    out: str | None = None
    stats: DatasetStatsModel | None = None
    records_stored: int | None = None
    flagged: int | None = None
    skipped_non_verbs: int | None = None


class DatasetStatsRequest(_Request):
    path: str


class ContextFeaturesRequest(_Request):
    sentence: str | None = None
    instance: InstanceModel | None = None
    window: int | None = None
    top_k: int | None = None


class DisambiguateRequest(_Request):
    instance: InstanceModel
    text: str
    strategy: str = "direct"


class DisambiguateResponse(BaseModel):
    instance_id: str
    predicted: str | None
    status: str
    skip_reason: str | None = None


class GenerationOverrides(_Request):
    model: str | None = None
    temperature: float | None = None
    max_tokens: int | None = None


class InferRequest(_Request):
    strategy: str
    corpus: str | None = None
    instances: list[InstanceModel] | None = None
    mode: str = "zero_shot"
    limit: int | None = None
    mock_responses: str | None = None
    mock: list[MockResponseLine] | None = None
    out: str | None = None
    params: GenerationOverrides | None = None


class PredictionModel(BaseModel):
    instance_id: str
    predicted: str | None
    status: str
    strategy: str
    raw_text: str
    skip_reason: str | None = None


class InferResponse(BaseModel):
    predictions: list[PredictionModel]
    count: int
    status_counts: dict[str, int]
    written: str | None = None


class JudgeParseRequest(_Request):
    text: str


class JudgeParseResponse(BaseModel):
    scores: dict[str, int]
    min_score: int


class EvaluateExactRequest(_Request):
    corpus: str
    predictions: list[PredictionModel] | None = None
    predictions_path: str | None = None
    dataset: str = ""
    strategy: str | None = None
    expectations: dict[str, float | dict[str, float]] | None = None
    report_out: str | None = None
    report_format: str = "json"


class PosScoreModel(BaseModel):
    n: int
    correct: int
    f1: float


class EvalReportModel(BaseModel):
    dataset: str
    strategy: str
    overall_f1: float
    per_pos: dict[str, PosScoreModel]
    parse_failures: int
    skipped: int
    timestamp: str | None = None


class EvaluateExactResponse(BaseModel):
    report: EvalReportModel
    misses: list[str]
    written: str | None = None


class CompareRequest(_Request):
    corpus: str
    predictions_a: str
    predictions_b: str
    method: str | None = None


class CompareResponse(BaseModel):
    b: int
    c: int
    n_both_correct: int
    n_both_wrong: int
    statistic: float | None
    p_value: float
    method: str
    stars: str


class EmbeddingScoreRequest(_Request):
    candidate: str
    reference: str


class EmbeddingScoreResponse(BaseModel):
    precision: float
    recall: float
    f1: float


class JudgeScoreModel(BaseModel):
    judge_model: str
    scores: dict[str, int]


class ReasoningRecordModel(BaseModel):
    example_id: str
    instance_id: str
    variant: str
    system: str
    input: str
    generated_rationale: str
    gold_sense_id: str
    judge_scores: list[JudgeScoreModel] = Field(default_factory=list)
    review_status: str
    flag_reasons: list[str] = Field(default_factory=list)


class ReviewQueueResponse(BaseModel):
    records: list[ReasoningRecordModel]
    pending: int


class ReviewDecideRequest(_Request):
    record_id: str
    decision: str
    note: str = ""
    reviewer: str = "human"
    force: bool = False


class ReviewExportRequest(_Request):
    out: str
    overwrite: bool = False


class ReviewExportResponse(BaseModel):
    written: int
    out: str
    stats: DatasetStatsModel


class JudgeAggregateResponse(BaseModel):
    means: dict[str, dict[str, float]]
    judged: int
    status_counts: dict[str, int]
