"""Builders for the four fine-tuning dataset variants, judging, and review.

Two variants are fully deterministic: the direct builder pairs each instance
with its gold gloss, and the CoT-neighbour builder writes a templated
rationale over the ranked neighbour tokens. The advanced and verb variants
route rationale generation through an LLM gateway, then optionally score
each rationale with one or more judge models; low-scoring or structurally
broken rationales are flagged for human review. A small append-only review
store gates what the exporter may emit.
"""

from __future__ import annotations

import json
import os
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import errors, prompting
from .context import ContextConfig, extract_features
from .corpus import SenseInventory, WsdInstance, Pos, candidate_senses
from .embedding import Embedder
from .llm_gateway import FinishReason, JudgeScores, parse_judge_json
from .prompting import GenerationParams, PromptKind, format_candidates

TRAINING_VARIANTS = frozenset(
    {
        PromptKind.DIRECT,
        PromptKind.COT_NEIGHBOUR,
        PromptKind.ADVANCED_REASONING,
        PromptKind.VERB_REASONING,
    }
)

# exported line schema, in emission order
EXPORT_FIELDS = ("example_id", "system", "input", "output", "variant", "instance_id")

DEFAULT_FLAG_THRESHOLD = 3


class ReviewStatus(str, Enum):
    UNREVIEWED = "unreviewed"
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    FLAGGED = "flagged"


@dataclass(frozen=True)
class TrainingExample:
    example_id: str
    system: str
    input: str
    output: str
    variant: PromptKind
    instance_id: str

    def __post_init__(self) -> None:
        if not isinstance(self.variant, PromptKind):
            object.__setattr__(self, "variant", PromptKind(self.variant))
        if self.variant not in TRAINING_VARIANTS:
            raise errors.DatagenError(f"not a training variant: {self.variant.value!r}")
        for name in ("example_id", "system", "input", "output", "instance_id"):
            if not getattr(self, name):
                raise errors.DatagenError(f"training example field {name!r} must be non-empty")

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "system": self.system,
            "input": self.input,
            "output": self.output,
            "variant": self.variant.value,
            "instance_id": self.instance_id,
        }


@dataclass
class ReasoningRecord:
    """One generated rationale and everything needed to gate its export."""

    example_id: str
    instance_id: str
    variant: PromptKind
    system: str
    input: str
    generated_rationale: str
    gold_sense_id: str
    judge_scores: list[tuple[str, JudgeScores]] = field(default_factory=list)
    review_status: ReviewStatus = ReviewStatus.UNREVIEWED
    flag_reasons: list[str] = field(default_factory=list)

    def flag(self, reason: str) -> None:
        self.flag_reasons.append(reason)
        if self.review_status is ReviewStatus.UNREVIEWED:
            self.review_status = ReviewStatus.FLAGGED

    @property
    def exportable(self) -> bool:
        return self.review_status in (ReviewStatus.ACCEPTED, ReviewStatus.UNREVIEWED)

    def to_example(self) -> TrainingExample:
        return TrainingExample(
            example_id=self.example_id,
            system=self.system,
            input=self.input,
            output=self.generated_rationale,
            variant=self.variant,
            instance_id=self.instance_id,
        )

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "instance_id": self.instance_id,
            "variant": self.variant.value,
            "system": self.system,
            "input": self.input,
            "generated_rationale": self.generated_rationale,
            "gold_sense_id": self.gold_sense_id,
            "judge_scores": [
                {"judge_model": model, "scores": scores.as_dict()}
                for model, scores in self.judge_scores
            ],
            "review_status": self.review_status.value,
            "flag_reasons": list(self.flag_reasons),
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ReasoningRecord":
        try:
            scores = [
                (
                    entry["judge_model"],
                    JudgeScores(
                        contextual_analysis=entry["scores"]["contextual_analysis_score"],
                        justification_accuracy=entry["scores"]["justification_accuracy_score"],
                        elimination_completeness=entry["scores"]["elimination_completeness_score"],
                        coherence=entry["scores"]["coherence_score"],
                    ),
                )
                for entry in obj.get("judge_scores", [])
            ]
            return cls(
                example_id=obj["example_id"],
                instance_id=obj["instance_id"],
                variant=PromptKind(obj["variant"]),
                system=obj["system"],
                input=obj["input"],
                generated_rationale=obj["generated_rationale"],
                gold_sense_id=obj["gold_sense_id"],
                judge_scores=scores,
                review_status=ReviewStatus(obj.get("review_status", "unreviewed")),
                flag_reasons=list(obj.get("flag_reasons", [])),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise errors.DatagenError(f"malformed reasoning record: {exc}") from exc


@dataclass(frozen=True)
class BuildError:
    instance_id: str
    reason: str


@dataclass
class BuildResult:
    """Deterministic-builder output: examples plus per-row failures."""

    examples: list[TrainingExample]
    errors: list[BuildError]


@dataclass
class RecordResult:
    """Generation-builder output: reasoning records plus per-row failures."""

    records: list[ReasoningRecord]
    errors: list[BuildError]


@dataclass(frozen=True)
class TokenStats:
    max: int
    avg: float

    def __post_init__(self) -> None:
        if self.avg > self.max + 1e-9:
            raise errors.DatagenError("token stats avg cannot exceed max")


@dataclass(frozen=True)
class DatasetStats:
    count: int
    input_tokens: TokenStats
    output_tokens: TokenStats
    counter: str = "whitespace"

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "input_tokens": {"max": self.input_tokens.max, "avg": self.input_tokens.avg},
            "output_tokens": {"max": self.output_tokens.max, "avg": self.output_tokens.avg},
            "counter": self.counter,
        }


def _count_tokens(text: str) -> int:
    # Table-style token stats use a whitespace proxy; the label records that
    return len(text.split())


def _resolve_gold(instance: WsdInstance, inventory: SenseInventory) -> str:
    if not instance.gold_sense_id:
        raise errors.DatagenError("instance has no gold sense id")
    if instance.gold_sense_id not in inventory.by_id:
        raise errors.DatagenError(f"gold sense {instance.gold_sense_id!r} not in inventory")
    return instance.gold_sense_id


def _candidates_for(instance: WsdInstance, inventory: SenseInventory):
    candidates = candidate_senses(inventory, instance.lemma, instance.pos)
    if not candidates:
        raise errors.DatagenError(
            f"no candidate senses for lemma {instance.lemma!r} pos {instance.pos.value!r}"
        )
    return candidates


def build_direct(
    instances: Sequence[WsdInstance], inventory: SenseInventory
) -> BuildResult:
    """Pair each instance with its gold gloss as the target output."""
    examples: list[TrainingExample] = []
    row_errors: list[BuildError] = []
    for inst in instances:
        try:
            gold = _resolve_gold(inst, inventory)
            req = prompting.render_direct(inst)
            examples.append(
                TrainingExample(
                    example_id=f"direct:{inst.instance_id}",
                    system=req.system_text,
                    input=req.user_text,
                    output=inventory.by_id[gold].gloss,
                    variant=PromptKind.DIRECT,
                    instance_id=inst.instance_id,
                )
            )
        except errors.EadwsdError as exc:
            row_errors.append(BuildError(inst.instance_id, str(exc)))
    return BuildResult(examples, row_errors)


def _cot_rationale(target: str, top_tokens: Sequence[str], gold: str, gloss: str) -> str:
    if top_tokens:
        ranked = ", ".join(f"{i}. {tok}" for i, tok in enumerate(top_tokens, start=1))
        return (
            f'The words nearest in meaning to "{target}" here are: {ranked}.\n'
            f'These neighbours fit the sense "{gloss}" rather than any alternative, '
            f"so the marked word carries sense {gold}.\n"
            f"Sense ID: {gold}"
        )
    return (
        "No salient neighbouring words were found within the context window.\n"
        f'Going by the sentence alone, the marked word matches the sense "{gloss}".\n'
        f"Sense ID: {gold}"
    )


def build_cot_neighbour(
    instances: Sequence[WsdInstance],
    inventory: SenseInventory,
    cfg: ContextConfig,
    backend: Embedder,
) -> BuildResult:
    """Templated neighbour-word rationales; no LLM involved."""
    examples: list[TrainingExample] = []
    row_errors: list[BuildError] = []
    for inst in instances:
        try:
            gold = _resolve_gold(inst, inventory)
            candidates = _candidates_for(inst, inventory)
            features = extract_features(inst, cfg, backend)
            req = prompting.render_cot_neighbour(inst, features, candidates)
            output = _cot_rationale(
                inst.target_surface, features.top_k_tokens, gold, inventory.by_id[gold].gloss
            )
            examples.append(
                TrainingExample(
                    example_id=f"cot_neighbour:{inst.instance_id}",
                    system=req.system_text,
                    input=req.user_text,
                    output=output,
                    variant=PromptKind.COT_NEIGHBOUR,
                    instance_id=inst.instance_id,
                )
            )
        except errors.EadwsdError as exc:
            row_errors.append(BuildError(inst.instance_id, str(exc)))
    return BuildResult(examples, row_errors)


def judge_input_text(instance: WsdInstance, candidates) -> str:
    """The sentence, target, and sense definitions a judge scores against."""
    return (
        f"Sentence: {instance.sentence}\n"
        f"Ambiguous word: {instance.target_surface}\n"
        f"Sense definitions:\n{format_candidates(candidates)}"
    )


_JUDGE_MAX_TOKENS = 256

_VERB_SECTIONS = (
    "Syntactic Evidence",
    "Semantic Evidence",
    "Decision",
    "Elimination of Alternatives",
)


def _judge_pass(entries, gateway, judge_models: Sequence[str], flag_threshold: int) -> None:
    """Score each live record with every judge model; flag low or broken ones."""
    for judge_model in judge_models:
        live = [e for e in entries if e[0].review_status is not ReviewStatus.REJECTED]
        if not live:
            return
        reqs = [
            prompting.render_judge(
                input_text,
                record.gold_sense_id,
                record.generated_rationale,
                params=GenerationParams(model=judge_model, max_tokens=_JUDGE_MAX_TOKENS),
            )
            for record, input_text in live
        ]
        for (record, _), completion in zip(live, gateway.complete_batch(reqs)):
            if completion.finish_reason is FinishReason.ERROR or not completion.text:
                record.flag(f"judge call failed ({judge_model})")
                continue
            try:
                scores = parse_judge_json(completion.text)
            except errors.JudgeParseError as exc:
                record.flag(f"judge output unparseable ({judge_model}): {exc}")
                continue
            record.judge_scores.append((judge_model, scores))
            low = [f"{k}={v}" for k, v in scores.as_dict().items() if v < flag_threshold]
            if low:
                record.flag(
                    f"{judge_model} scored below threshold {flag_threshold}: " + ", ".join(low)
                )


def _build_reasoning(
    instances: Sequence[WsdInstance],
    inventory: SenseInventory,
    gateway,
    variant: PromptKind,
    judge_models: Sequence[str],
    flag_threshold: int,
    params: GenerationParams | None,
) -> RecordResult:
    records: list[ReasoningRecord] = []
    row_errors: list[BuildError] = []
    prepared = []  # (instance, candidates, gold, generation request)
    for inst in instances:
        try:
            gold = _resolve_gold(inst, inventory)
            candidates = _candidates_for(inst, inventory)
            if variant is PromptKind.VERB_REASONING:
                gen_req = prompting.render_verb(inst, candidates, gold, params=params)
                inf_req = prompting.render_verb_inference(inst, candidates)
            else:
                gen_req = prompting.render_advanced(inst, candidates, gold, params=params)
                inf_req = prompting.render_advanced_inference(inst, candidates)
        except errors.EadwsdError as exc:
            row_errors.append(BuildError(inst.instance_id, str(exc)))
            continue
        prepared.append((inst, candidates, gold, gen_req, inf_req))

    completions = gateway.complete_batch([p[3] for p in prepared]) if prepared else []
    judged_entries = []
    for (inst, candidates, gold, _gen, inf_req), completion in zip(prepared, completions):
        record = ReasoningRecord(
            example_id=f"{variant.value}:{inst.instance_id}",
            instance_id=inst.instance_id,
            variant=variant,
            system=inf_req.system_text,
            input=inf_req.user_text,
            generated_rationale=completion.text,
            gold_sense_id=gold,
        )
        if completion.finish_reason is not FinishReason.STOP:
            record.review_status = ReviewStatus.REJECTED
            record.flag_reasons.append(
                f"generation failed: finish_reason={completion.finish_reason.value}"
            )
        elif variant is PromptKind.VERB_REASONING:
            missing = [s for s in _VERB_SECTIONS if not re.search(re.escape(s), completion.text)]
            if missing:
                record.flag("missing reasoning sections: " + ", ".join(missing))
        records.append(record)
        judged_entries.append((record, judge_input_text(inst, candidates)))

    if judge_models:
        _judge_pass(judged_entries, gateway, judge_models, flag_threshold)
    return RecordResult(records, row_errors)


def build_advanced(
    instances: Sequence[WsdInstance],
    inventory: SenseInventory,
    gateway,
    judge_models: Sequence[str] = (),
    flag_threshold: int = DEFAULT_FLAG_THRESHOLD,
    params: GenerationParams | None = None,
) -> RecordResult:
    """LLM-written rationales with the gold sense revealed to the generator."""
    return _build_reasoning(
        instances, inventory, gateway, PromptKind.ADVANCED_REASONING,
        judge_models, flag_threshold, params,
    )


def build_verb(
    instances: Sequence[WsdInstance],
    inventory: SenseInventory,
    gateway,
    judge_models: Sequence[str] = (),
    flag_threshold: int = DEFAULT_FLAG_THRESHOLD,
    params: GenerationParams | None = None,
) -> RecordResult:
    """Verb-only rationales; rationales missing the four sections get flagged."""
    for inst in instances:
        if inst.pos is not Pos.VERB:
            raise errors.DatagenError(
                f"verb build takes verbs only; {inst.instance_id!r} has pos {inst.pos.value!r}"
            )
    return _build_reasoning(
        instances, inventory, gateway, PromptKind.VERB_REASONING,
        judge_models, flag_threshold, params,
    )


@dataclass(frozen=True)
class JudgeAggregate:
    """Per-judge per-dimension means plus review-status tallies."""

    means: dict  # judge_model -> {wire dimension key: mean}
    judged: int
    status_counts: dict  # review status value -> count

    def to_dict(self) -> dict:
        return {
            "means": {model: dict(dims) for model, dims in sorted(self.means.items())},
            "judged": self.judged,
            "status_counts": dict(self.status_counts),
        }


def aggregate_judge(records: Iterable[ReasoningRecord]) -> JudgeAggregate:
    """Arithmetic means per dimension per judge model, unrounded."""
    records = list(records)
    sums: dict[str, Counter] = {}
    counts: Counter = Counter()
    judged = 0
    for record in records:
        if record.judge_scores:
            judged += 1
        for model, scores in record.judge_scores:
            bucket = sums.setdefault(model, Counter())
            for key, value in scores.as_dict().items():
                bucket[key] += value
            bucket["__n__"] += 1
    if judged == 0:
        raise errors.DatagenError("no judged records to aggregate")
    means = {}
    for model, bucket in sums.items():
        n = bucket.pop("__n__")
        means[model] = {key: bucket[key] / n for key in sorted(bucket)}
    status_counts = Counter(r.review_status.value for r in records)
    for status in ReviewStatus:
        status_counts.setdefault(status.value, 0)
    return JudgeAggregate(means=means, judged=judged, status_counts=dict(status_counts))


class ReviewStore:
    """Reasoning records plus an append-only review log, both JSONL on disk.

    Records that arrive already rejected (failed generations) get an
    automatic review-log entry so every terminal status traces to a logged
    decision. Accepting or rejecting an already-decided record requires
    ``force``.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.records_path = self.root / "records.jsonl"
        self.log_path = self.root / "review_log.jsonl"
        self._lock = threading.Lock()
        self._records: dict[str, ReasoningRecord] = {}
        if self.records_path.exists():
            for lineno, line in enumerate(
                self.records_path.read_text(encoding="utf-8").splitlines(), start=1
            ):
                if not line.strip():
                    continue
                try:
                    record = ReasoningRecord.from_dict(json.loads(line))
                except (json.JSONDecodeError, errors.DatagenError) as exc:
                    raise errors.ReviewError(
                        f"{self.records_path}:{lineno}: unreadable record: {exc}"
                    ) from exc
                self._records[record.example_id] = record

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[ReasoningRecord]:
        return list(self._records.values())

    def get(self, record_id: str) -> ReasoningRecord:
        try:
            return self._records[record_id]
        except KeyError:
            raise errors.ReviewError(f"unknown record: {record_id!r}") from None

    def queue(self, statuses: Sequence[ReviewStatus] = (ReviewStatus.FLAGGED, ReviewStatus.UNREVIEWED)) -> list[ReasoningRecord]:
        """Records awaiting a decision, flagged ones first."""
        wanted = tuple(statuses)
        pending = [r for r in self._records.values() if r.review_status in wanted]
        order = {status: i for i, status in enumerate(wanted)}
        return sorted(pending, key=lambda r: (order[r.review_status], r.example_id))

    def add_records(self, records: Iterable[ReasoningRecord]) -> None:
        with self._lock:
            incoming = list(records)
            for record in incoming:
                if record.example_id in self._records:
                    raise errors.ReviewError(f"record already stored: {record.example_id!r}")
            for record in incoming:
                self._records[record.example_id] = record
                if record.review_status is ReviewStatus.REJECTED:
                    note = "; ".join(record.flag_reasons) or "rejected at generation time"
                    self._append_log(record.example_id, "reject", note, "auto:generation")
            self._persist()

    def review(
        self,
        record_id: str,
        decision: str,
        note: str = "",
        reviewer: str = "human",
        force: bool = False,
    ) -> ReasoningRecord:
        if decision not in ("accept", "reject"):
            raise errors.ReviewError(f"decision must be accept or reject, got {decision!r}")
        with self._lock:
            record = self.get(record_id)
            if record.review_status in (ReviewStatus.ACCEPTED, ReviewStatus.REJECTED) and not force:
                raise errors.ReviewError(
                    f"record {record_id!r} already {record.review_status.value}; pass force to re-review"
                )
            record.review_status = (
                ReviewStatus.ACCEPTED if decision == "accept" else ReviewStatus.REJECTED
            )
            self._append_log(record_id, decision, note, reviewer)
            self._persist()
            return record

    def _append_log(self, record_id: str, decision: str, note: str, reviewer: str) -> None:
        entry = {
            "record_id": record_id,
            "decision": decision,
            "note": note,
            "reviewer": reviewer,
            "ts": datetime.now(timezone.utc).isoformat(),
        }
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def review_log(self) -> list[dict]:
        if not self.log_path.exists():
            return []
        return [
            json.loads(line)
            for line in self.log_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

    def _persist(self) -> None:
        tmp = self.records_path.with_suffix(".jsonl.tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for record in self._records.values():
                fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
        os.replace(tmp, self.records_path)


def _to_examples(items: Iterable) -> list[TrainingExample]:
    """Accept training examples directly; gate reasoning records by status."""
    out: list[TrainingExample] = []
    for item in items:
        if isinstance(item, TrainingExample):
            out.append(item)
        elif isinstance(item, ReasoningRecord):
            if item.review_status is ReviewStatus.REJECTED:
                continue
            if not item.exportable:
                continue
            out.append(item.to_example())
        else:
            raise errors.DatagenError(f"cannot export item of type {type(item).__name__}")
    return out


def export_jsonl(
    items: Iterable,
    path: str | Path,
    overwrite: bool = False,
) -> DatasetStats:
    """Write the training JSONL file and return its token statistics.

    Rejected records are never written; flagged ones wait for an accept.
    """
    path = Path(path)
    if path.exists() and not overwrite:
        raise errors.DatagenError(f"refusing to overwrite existing export: {path}")
    examples = _to_examples(items)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example.to_dict(), ensure_ascii=False) + "\n")
    return dataset_stats(examples)


def _token_stats(counts: Sequence[int]) -> TokenStats:
    if not counts:
        return TokenStats(max=0, avg=0.0)
    return TokenStats(max=max(counts), avg=sum(counts) / len(counts))


def dataset_stats(examples: Sequence[TrainingExample]) -> DatasetStats:
    """Whitespace-token statistics over system+input and output fields."""
    input_counts = [_count_tokens(e.system) + _count_tokens(e.input) for e in examples]
    output_counts = [_count_tokens(e.output) for e in examples]
    return DatasetStats(
        count=len(examples),
        input_tokens=_token_stats(input_counts),
        output_tokens=_token_stats(output_counts),
    )


def load_export(path: str | Path) -> list[TrainingExample]:
    """Read a training JSONL file back, validating the line schema."""
    path = Path(path)
    examples: list[TrainingExample] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise errors.DatagenError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or set(obj) != set(EXPORT_FIELDS):
            raise errors.DatagenError(
                f"{path}:{lineno}: expected exactly fields {sorted(EXPORT_FIELDS)}"
            )
        try:
            examples.append(TrainingExample(**obj))
        except errors.DatagenError as exc:
            raise errors.DatagenError(f"{path}:{lineno}: {exc}") from exc
    return examples


def check_export_integrity(
    path: str | Path,
    instances: Sequence[WsdInstance],
    store: ReviewStore | None = None,
) -> list[str]:
    """Return violations: unknown instance ids or exported rejected records."""
    problems: list[str] = []
    known = {inst.instance_id for inst in instances}
    rejected = set()
    if store is not None:
        rejected = {
            r.example_id for r in store.records() if r.review_status is ReviewStatus.REJECTED
        }
    for example in load_export(path):
        if example.instance_id not in known:
            problems.append(f"{example.example_id}: unknown instance {example.instance_id!r}")
        if example.example_id in rejected:
            problems.append(f"{example.example_id}: rejected record was exported")
    return problems
