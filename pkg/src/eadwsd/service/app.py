"""HTTP service wrapping the disambiguation toolkit.

``create_app`` binds one application config to a FastAPI instance. Domain
errors surface as HTTP 400; upstream faults (remote embedding transport or
contract breaks, chat endpoint protocol breaks) surface as HTTP 502. The
sense inventory, example store, and review store load lazily on first use
and stay cached for the life of the app.
"""

from __future__ import annotations

import dataclasses
import json
from collections import Counter
from pathlib import Path
from typing import Sequence

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, errors, prompting
from ..config import AppConfig, load_config
from ..context import ContextConfig, extract_features
from ..corpus import (
    Pos,
    SampleSpec,
    SenseInventory,
    Source,
    WsdInstance,
    dump_instances,
    instance_to_dict,
    load_instances,
    load_sense_inventory,
    parse_pos,
    stratified_sample,
)
from ..datagen import (
    ReviewStatus,
    ReviewStore,
    aggregate_judge,
    build_advanced,
    build_cot_neighbour,
    build_direct,
    build_verb,
    dataset_stats,
    export_jsonl,
    load_export,
)
from ..ead_engine import (
    Mode,
    ParseStatus,
    Prediction,
    Strategy,
    disambiguate,
    dump_predictions,
    explore,
    load_predictions,
    run_pipeline,
)
from ..embedding import ConfigEmbedder
from ..evaluation import (
    align_instances,
    check_expectations,
    embedding_score,
    fool_me_score,
    mcnemar,
    paired_outcomes,
    score_exact,
    stars,
    write_report,
)
from ..llm_gateway import (
    Completion,
    FinishReason,
    ScriptedGateway,
    ScriptedRule,
    parse_judge_json,
)
from ..prompting import GenerationParams
from . import schemas

VARIANT_ALIASES = {
    "direct": "direct",
    "cot": "cot_neighbour",
    "cot_neighbour": "cot_neighbour",
    "advanced": "advanced_reasoning",
    "advanced_reasoning": "advanced_reasoning",
    "verb": "verb_reasoning",
    "verb_reasoning": "verb_reasoning",
}

STRATEGY_ALIASES = {
    "direct": Strategy.DIRECT,
    "cot": Strategy.COT_NEIGHBOUR,
    "cot_neighbour": Strategy.COT_NEIGHBOUR,
    "advanced": Strategy.ADVANCED,
    "advanced_reasoning": Strategy.ADVANCED,
}

UPSTREAM_ERRORS = (
    errors.EmbeddingTransportError,
    errors.EmbeddingContractError,
    errors.GatewayError,
)


class ServiceState:
    """Config plus lazily loaded shared resources."""

    def __init__(self, config: AppConfig) -> None:
        self.config = config
        self.embedder = ConfigEmbedder(config.embedding)
        self._inventory: SenseInventory | None = None
        self._review_store: ReviewStore | None = None
        self._kb: dict | None = None

    @property
    def inventory(self) -> SenseInventory:
        if self._inventory is None:
            self._inventory = load_sense_inventory(self.config.inventory)
        return self._inventory

    @property
    def review_store(self) -> ReviewStore:
        if self._review_store is None:
            self._review_store = ReviewStore(self.config.review_dir)
        return self._review_store

    def examples_kb(self) -> dict:
        if self._kb is None:
            self._kb = prompting.examples_kb(self.inventory)
        return self._kb

    def gateway(
        self,
        mock_responses: str | None,
        mock: Sequence[schemas.MockResponseLine] | None,
    ):
        """A scripted double when a mock is given, else the configured endpoint."""
        if mock_responses is not None and mock:
            raise errors.ConfigError("pass either mock_responses or mock, not both")
        if mock_responses is not None:
            return _scripted_gateway(
                _load_mock_lines(Path(mock_responses)), self.config.audit_log_path
            )
        if mock:
            return _scripted_gateway(list(mock), self.config.audit_log_path)
        if self.config.gateway is None:
            raise errors.ConfigError(
                "no chat gateway configured; set gateway in the config or pass a mock script"
            )
        return self.config.gateway.build(default_audit_log=self.config.audit_log_path)


def _load_mock_lines(path: Path) -> list[schemas.MockResponseLine]:
    if not path.exists():
        raise errors.ConfigError(f"mock responses file not found: {path}")
    lines: list[schemas.MockResponseLine] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        try:
            obj = json.loads(raw)
            lines.append(schemas.MockResponseLine(**obj))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise errors.ConfigError(f"{path}:{lineno}: bad mock line: {exc}") from exc
    return lines


def _finish_reason(value: str, where: str) -> FinishReason:
    try:
        return FinishReason(value)
    except ValueError as exc:
        raise errors.ConfigError(f"{where}: unknown finish_reason {value!r}") from exc


def _scripted_gateway(
    lines: Sequence[schemas.MockResponseLine], audit_log_path: Path
) -> ScriptedGateway:
    positional: list[str | tuple[str, FinishReason]] = []
    rules: list[ScriptedRule] = []
    for i, line in enumerate(lines):
        finish = _finish_reason(line.finish_reason, f"mock line {i + 1}")
        if line.when_contains:
            rules.append(ScriptedRule(line.when_contains, line.text, finish))
        elif finish is FinishReason.STOP:
            positional.append(line.text)
        else:
            positional.append((line.text, finish))
    return ScriptedGateway(
        responses=positional, rules=rules, audit_log_path=audit_log_path
    )


def _parse_source(value: str) -> Source:
    try:
        return Source(value)
    except ValueError as exc:
        raise errors.ConfigError(f"unknown source: {value!r}") from exc


def _parse_variant(value: str) -> str:
    try:
        return VARIANT_ALIASES[value]
    except KeyError:
        raise errors.ConfigError(
            f"unknown variant {value!r}; expected one of {sorted(set(VARIANT_ALIASES))}"
        ) from None


def _parse_strategy(value: str) -> Strategy:
    try:
        return STRATEGY_ALIASES[value]
    except KeyError:
        raise errors.ConfigError(
            f"unknown strategy {value!r}; expected one of {sorted(set(STRATEGY_ALIASES))}"
        ) from None


def _parse_mode(value: str) -> Mode:
    try:
        return Mode(value)
    except ValueError as exc:
        raise errors.ConfigError(f"unknown mode: {value!r}") from exc


def _to_instance(model: schemas.InstanceModel) -> WsdInstance:
    return WsdInstance(
        instance_id=model.instance_id,
        sentence=model.sentence,
        lemma=model.lemma,
        pos=parse_pos(model.pos),
        gold_sense_id=model.gold_sense_id,
        source=_parse_source(model.source),
        candidates=tuple(model.candidates) if model.candidates else None,
    )


def _to_prediction(model: schemas.PredictionModel) -> Prediction:
    try:
        status = ParseStatus(model.status)
    except ValueError as exc:
        raise errors.ConfigError(f"unknown parse status: {model.status!r}") from exc
    return Prediction(
        instance_id=model.instance_id,
        predicted_sense_id=model.predicted,
        parse_status=status,
        raw_text=model.raw_text,
        strategy=_parse_strategy(model.strategy),
        latency_ms=0,
        skip_reason=model.skip_reason,
    )


def _load_corpus(svc: ServiceState, corpus: str) -> list[WsdInstance]:
    """Resolve a corpus name or literal path; ``.jsonl`` files use the JSONL reader."""
    path = svc.config.corpus_path(corpus)
    fmt = "jsonl" if path.suffix == ".jsonl" else "fews_tsv"
    return list(load_instances(path, format=fmt))


def _resolve_instances(
    svc: ServiceState,
    corpus: str | None,
    inline: Sequence[schemas.InstanceModel] | None,
    what: str,
) -> list[WsdInstance]:
    """Exactly one input channel: a configured corpus name/path or inline rows."""
    if (corpus is None) == (inline is None):
        raise errors.ConfigError(f"{what} needs exactly one of corpus or instances")
    if corpus is not None:
        return _load_corpus(svc, corpus)
    return [_to_instance(m) for m in inline]


def _stats_model(stats) -> schemas.DatasetStatsModel:
    return schemas.DatasetStatsModel(**stats.to_dict())


def _context_cfg(base: ContextConfig, window: int | None, top_k: int | None) -> ContextConfig:
    if window is None and top_k is None:
        return base
    return ContextConfig(
        window=window if window is not None else base.window,
        top_k=top_k if top_k is not None else base.top_k,
        stopword_list_id=base.stopword_list_id,
    )


def _generation_params(overrides: schemas.GenerationOverrides | None) -> GenerationParams | None:
    if overrides is None:
        return None
    fields = {k: v for k, v in overrides.model_dump().items() if v is not None}
    if not fields:
        return None
    return dataclasses.replace(prompting.DEFAULT_PARAMS, **fields)


def create_app(config: AppConfig | str | Path) -> FastAPI:
    if not isinstance(config, AppConfig):
        config = load_config(config)
    svc = ServiceState(config)
    app = FastAPI(title="eadwsd", version=__version__)
    app.state.svc = svc

    @app.exception_handler(errors.EadwsdError)
    async def _domain_error(request: Request, exc: errors.EadwsdError) -> JSONResponse:
        status = 502 if isinstance(exc, UPSTREAM_ERRORS) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/config")
    def get_config() -> dict:
        return svc.config.to_dict()

    @app.post("/sample", response_model=schemas.SampleResponse)
    def sample(req: schemas.SampleRequest) -> schemas.SampleResponse:
        instances = _load_corpus(svc, req.corpus)
        spec = SampleSpec(per_pos_counts=dict(req.counts), seed=req.seed)
        sampled = stratified_sample(instances, spec)
        written = None
        if req.out is not None:
            counts = json.dumps(req.counts, sort_keys=True)
            header = f"sample corpus={req.corpus} seed={req.seed} counts={counts}"
            dump_instances(sampled, req.out, header=header)
            written = req.out
        return schemas.SampleResponse(
            instances=[schemas.InstanceModel(**instance_to_dict(i)) for i in sampled],
            count=len(sampled),
            written=written,
        )

    @app.post("/datasets/build", response_model=schemas.BuildDatasetResponse)
    def build_dataset(req: schemas.BuildDatasetRequest) -> schemas.BuildDatasetResponse:
        variant = _parse_variant(req.variant)
        instances = _resolve_instances(svc, req.corpus, req.instances, "build")

        if variant in ("direct", "cot_neighbour"):
            if req.judge:
                raise errors.ConfigError("judging applies to generated rationales only")
            if req.mock or req.mock_responses:
                raise errors.ConfigError(f"variant {variant!r} does not call a model")
            if variant == "direct":
                result = build_direct(instances, svc.inventory)
            else:
                cfg = _context_cfg(svc.config.context, req.window, req.top_k)
                result = build_cot_neighbour(instances, svc.inventory, cfg, svc.embedder)
            stats = dataset_stats(result.examples)
            written = None
            if req.out is not None:
                stats = export_jsonl(result.examples, req.out, overwrite=req.overwrite)
                written = req.out
            return schemas.BuildDatasetResponse(
                variant=variant,
                built=len(result.examples),
                errors=[
                    schemas.BuildErrorModel(instance_id=e.instance_id, reason=e.reason)
                    for e in result.errors
                ],
                out=written,
                stats=_stats_model(stats),
            )

        # generated rationales go through review before any export
        if req.out is not None:
            raise errors.ConfigError(
                f"variant {variant!r} exports through review; use /review/export"
            )
        judge_models: tuple[str, ...] = ()
        if req.judge:
            judge_models = svc.config.judge_models
            if not judge_models:
                raise errors.ConfigError("judging requested but judge_models is empty")
        gateway = svc.gateway(req.mock_responses, req.mock)
        params = GenerationParams(model=req.model) if req.model else None
        skipped_non_verbs = None
        if variant == "verb_reasoning":
            verbs = [inst for inst in instances if inst.pos is Pos.VERB]
            skipped_non_verbs = len(instances) - len(verbs)
            instances = verbs
            if not instances:
                raise errors.DatagenError("no verb instances to build from")
            result = build_verb(
                instances, svc.inventory, gateway,
                judge_models, svc.config.flag_threshold, params,
            )
        else:
            result = build_advanced(
                instances, svc.inventory, gateway,
                judge_models, svc.config.flag_threshold, params,
            )
        svc.review_store.add_records(result.records)
        flagged = sum(
            1 for r in result.records if r.review_status is ReviewStatus.FLAGGED
        )
        return schemas.BuildDatasetResponse(
            variant=variant,
            built=len(result.records),
            errors=[
                schemas.BuildErrorModel(instance_id=e.instance_id, reason=e.reason)
                for e in result.errors
            ],
            records_stored=len(result.records),
            flagged=flagged,
            skipped_non_verbs=skipped_non_verbs,
        )

    @app.post("/datasets/stats", response_model=schemas.DatasetStatsModel)
    def dataset_stats_endpoint(req: schemas.DatasetStatsRequest) -> schemas.DatasetStatsModel:
        path = Path(req.path)
        if not path.exists():
            raise errors.DatagenError(f"no such export: {path}")
        return _stats_model(dataset_stats(load_export(path)))

    @app.post("/context/features")
    def context_features(req: schemas.ContextFeaturesRequest) -> dict:
        if (req.sentence is None) == (req.instance is None):
            raise errors.ConfigError("pass exactly one of sentence or instance")
        if req.instance is not None:
            instance = _to_instance(req.instance)
        else:
            instance = WsdInstance(
                instance_id="adhoc:0",
                sentence=req.sentence,
                lemma="adhoc",
                pos=Pos.NOUN,
            )
        cfg = _context_cfg(svc.config.context, req.window, req.top_k)
        features = extract_features(instance, cfg, svc.embedder)
        return features.to_dict(instance.instance_id)

    @app.post("/disambiguate", response_model=schemas.DisambiguateResponse)
    def disambiguate_endpoint(req: schemas.DisambiguateRequest) -> schemas.DisambiguateResponse:
        instance = _to_instance(req.instance)
        strategy = _parse_strategy(req.strategy)
        cands = explore(instance, svc.inventory)
        finish = FinishReason.STOP if req.text else FinishReason.ERROR
        completion = Completion(
            request_id=f"adhoc:{instance.instance_id}",
            text=req.text,
            finish_reason=finish,
            latency_ms=0,
            attempts=1,
        )
        pred = disambiguate(completion, cands, strategy, backend=svc.embedder)
        return schemas.DisambiguateResponse(
            instance_id=pred.instance_id,
            predicted=pred.predicted_sense_id,
            status=pred.parse_status.value,
            skip_reason=pred.skip_reason,
        )

    @app.post("/infer/run", response_model=schemas.InferResponse)
    def infer_run(req: schemas.InferRequest) -> schemas.InferResponse:
        instances = _resolve_instances(svc, req.corpus, req.instances, "inference")
        if req.limit is not None:
            if req.limit < 1:
                raise errors.ConfigError("limit must be >= 1")
            instances = instances[: req.limit]
        strategy = _parse_strategy(req.strategy)
        mode = _parse_mode(req.mode)
        kb = svc.examples_kb() if mode is Mode.FEW_SHOT else None
        gateway = svc.gateway(req.mock_responses, req.mock)
        predictions = run_pipeline(
            instances,
            svc.inventory,
            strategy,
            gateway,
            backend=svc.embedder,
            cfg=svc.config.context,
            mode=mode,
            kb=kb,
            params=_generation_params(req.params),
        )
        written = None
        if req.out is not None:
            dump_predictions(predictions, req.out)
            written = req.out
        status_counts = Counter(p.parse_status.value for p in predictions)
        for status in ParseStatus:
            status_counts.setdefault(status.value, 0)
        return schemas.InferResponse(
            predictions=[schemas.PredictionModel(**p.to_dict()) for p in predictions],
            count=len(predictions),
            status_counts=dict(status_counts),
            written=written,
        )

    @app.post("/judge/parse", response_model=schemas.JudgeParseResponse)
    def judge_parse(req: schemas.JudgeParseRequest) -> schemas.JudgeParseResponse:
        scores = parse_judge_json(req.text)
        return schemas.JudgeParseResponse(scores=scores.as_dict(), min_score=scores.min_score())

    @app.get("/judge/aggregate", response_model=schemas.JudgeAggregateResponse)
    def judge_aggregate() -> schemas.JudgeAggregateResponse:
        agg = aggregate_judge(svc.review_store.records())
        return schemas.JudgeAggregateResponse(**agg.to_dict())

    def _load_or_inline_predictions(
        inline: Sequence[schemas.PredictionModel] | None, path: str | None, what: str
    ) -> list[Prediction]:
        if (inline is None) == (path is None):
            raise errors.ConfigError(
                f"{what} needs exactly one of predictions or predictions_path"
            )
        if path is not None:
            return load_predictions(path)
        return [_to_prediction(m) for m in inline]

    @app.post("/evaluate/exact", response_model=schemas.EvaluateExactResponse)
    def evaluate_exact(req: schemas.EvaluateExactRequest) -> schemas.EvaluateExactResponse:
        predictions = _load_or_inline_predictions(
            req.predictions, req.predictions_path, "evaluation"
        )
        corpus = _load_corpus(svc, req.corpus)
        aligned = align_instances(predictions, corpus)
        report = score_exact(
            predictions,
            aligned,
            dataset=req.dataset or req.corpus,
            strategy=req.strategy,
        )
        misses = check_expectations(report, req.expectations) if req.expectations else []
        written = None
        if req.report_out is not None:
            write_report(report, req.report_out, format=req.report_format)
            written = req.report_out
        return schemas.EvaluateExactResponse(
            report=schemas.EvalReportModel(**report.to_dict()),
            misses=misses,
            written=written,
        )

    @app.post("/evaluate/compare", response_model=schemas.CompareResponse)
    def evaluate_compare(req: schemas.CompareRequest) -> schemas.CompareResponse:
        preds_a = load_predictions(req.predictions_a)
        preds_b = load_predictions(req.predictions_b)
        corpus = _load_corpus(svc, req.corpus)
        aligned = align_instances(preds_a, corpus)
        outcomes = paired_outcomes(preds_a, preds_b, aligned)
        result = mcnemar(outcomes, method=req.method)
        return schemas.CompareResponse(
            b=outcomes.b,
            c=outcomes.c,
            n_both_correct=outcomes.n_both_correct,
            n_both_wrong=outcomes.n_both_wrong,
            statistic=result.statistic,
            p_value=result.p_value,
            method=result.method,
            stars=stars(result.p_value),
        )

    @app.post("/evaluate/fool-me")
    def evaluate_fool_me(req: schemas.EvaluateExactRequest) -> dict:
        predictions = _load_or_inline_predictions(
            req.predictions, req.predictions_path, "evaluation"
        )
        corpus = _load_corpus(svc, req.corpus)
        aligned = align_instances(predictions, corpus)
        score = fool_me_score(predictions, aligned)
        return {
            "source": score.source,
            "n": score.n,
            "correct": score.correct,
            "f1": score.f1,
        }

    @app.post("/evaluate/embedding", response_model=schemas.EmbeddingScoreResponse)
    def evaluate_embedding(req: schemas.EmbeddingScoreRequest) -> schemas.EmbeddingScoreResponse:
        score = embedding_score(req.candidate, req.reference, svc.embedder)
        return schemas.EmbeddingScoreResponse(
            precision=score.precision, recall=score.recall, f1=score.f1
        )

    @app.get("/review/queue", response_model=schemas.ReviewQueueResponse)
    def review_queue() -> schemas.ReviewQueueResponse:
        pending = svc.review_store.queue()
        return schemas.ReviewQueueResponse(
            records=[schemas.ReasoningRecordModel(**r.to_dict()) for r in pending],
            pending=len(pending),
        )

    @app.post("/review/decide", response_model=schemas.ReasoningRecordModel)
    def review_decide(req: schemas.ReviewDecideRequest) -> schemas.ReasoningRecordModel:
        record = svc.review_store.review(
            req.record_id, req.decision, note=req.note, reviewer=req.reviewer, force=req.force
        )
        return schemas.ReasoningRecordModel(**record.to_dict())

    @app.post("/review/export", response_model=schemas.ReviewExportResponse)
    def review_export(req: schemas.ReviewExportRequest) -> schemas.ReviewExportResponse:
        stats = export_jsonl(svc.review_store.records(), req.out, overwrite=req.overwrite)
        return schemas.ReviewExportResponse(
            written=stats.count, out=req.out, stats=_stats_model(stats)
        )

    return app
