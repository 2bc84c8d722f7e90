"""Scoring: exact-match micro-F1, greedy embedding score, McNemar, reports.

Predictions are scored with always-answer semantics: parse failures and
skipped instances are charged as incorrect, so micro-F1 equals accuracy and
stays comparable across runs. The embedding score is the plain greedy
token-matching form (no IDF weighting, no baseline rescaling). McNemar uses
the exact two-sided binomial for small discordant counts and the
continuity-corrected chi-squared otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import errors
from .context import word_tokens
from .corpus import Pos, Source, WsdInstance
from .ead_engine import ParseStatus, Prediction
from .embedding import Embedder, cosine

# below this many discordant pairs the exact binomial is used
EXACT_THRESHOLD = 25

METHOD_EXACT = "exact_binomial"
METHOD_CHI2 = "chi2_cc"


@dataclass(frozen=True)
class PosScore:
    n: int
    correct: int
    f1: float

    def __post_init__(self) -> None:
        if self.correct > self.n or self.correct < 0:
            raise errors.EvaluationError("correct must lie in [0, n]")
        if not 0.0 <= self.f1 <= 1.0:
            raise errors.EvaluationError("f1 must lie in [0, 1]")


@dataclass(frozen=True)
class EvalReport:
    per_pos: dict[str, PosScore]
    overall_f1: float
    parse_failures: int
    skipped: int
    strategy: str
    dataset: str
    timestamp: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.overall_f1 <= 1.0:
            raise errors.EvaluationError("overall_f1 must lie in [0, 1]")

    @property
    def total(self) -> int:
        return sum(score.n for score in self.per_pos.values())

    @property
    def total_correct(self) -> int:
        return sum(score.correct for score in self.per_pos.values())

    def to_dict(self) -> dict:
        obj: dict = {
            "dataset": self.dataset,
            "strategy": self.strategy,
            "overall_f1": self.overall_f1,
            "parse_failures": self.parse_failures,
            "skipped": self.skipped,
            "per_pos": {
                pos: {"n": s.n, "correct": s.correct, "f1": s.f1}
                for pos, s in self.per_pos.items()
            },
        }
        if self.timestamp is not None:
            obj["timestamp"] = self.timestamp
        return obj


def _check_alignment(predictions: Sequence[Prediction], instances: Sequence[WsdInstance]) -> None:
    if len(predictions) != len(instances):
        raise errors.EvaluationError(
            f"{len(predictions)} predictions vs {len(instances)} instances"
        )
    for pred, inst in zip(predictions, instances):
        if pred.instance_id != inst.instance_id:
            raise errors.EvaluationError(
                f"prediction/instance id mismatch: {pred.instance_id!r} vs {inst.instance_id!r}"
            )


def _is_correct(pred: Prediction, inst: WsdInstance) -> bool:
    return pred.predicted_sense_id is not None and pred.predicted_sense_id == inst.gold_sense_id


def align_instances(
    predictions: Sequence[Prediction], instances: Sequence[WsdInstance]
) -> list[WsdInstance]:
    """Reorder instances to match a prediction list loaded from disk."""
    by_id: dict[str, WsdInstance] = {}
    for inst in instances:
        if inst.instance_id in by_id:
            raise errors.EvaluationError(f"duplicate instance id: {inst.instance_id!r}")
        by_id[inst.instance_id] = inst
    aligned = []
    for pred in predictions:
        if pred.instance_id not in by_id:
            raise errors.EvaluationError(
                f"prediction references unknown instance: {pred.instance_id!r}"
            )
        aligned.append(by_id[pred.instance_id])
    return aligned


def score_exact(
    predictions: Sequence[Prediction],
    instances: Sequence[WsdInstance],
    dataset: str = "",
    strategy: str | None = None,
    timestamp: str | None = None,
) -> EvalReport:
    """Always-answer micro-F1 per POS and overall; every item is scored."""
    if not predictions:
        raise errors.EvaluationError("nothing to score")
    _check_alignment(predictions, instances)
    for inst in instances:
        if not inst.gold_sense_id:
            raise errors.EvaluationError(f"instance {inst.instance_id!r} has no gold sense")

    counts: dict[Pos, list[int]] = {}
    parse_failures = 0
    skipped = 0
    for pred, inst in zip(predictions, instances):
        n_correct = counts.setdefault(inst.pos, [0, 0])
        n_correct[0] += 1
        if _is_correct(pred, inst):
            n_correct[1] += 1
        if pred.parse_status is ParseStatus.FAILURE:
            if pred.skip_reason is not None:
                skipped += 1
            else:
                parse_failures += 1

    per_pos = {
        pos.value: PosScore(n=c[0], correct=c[1], f1=c[1] / c[0])
        for pos, c in sorted(counts.items(), key=lambda kv: list(Pos).index(kv[0]))
    }
    total = sum(c[0] for c in counts.values())
    correct = sum(c[1] for c in counts.values())
    return EvalReport(
        per_pos=per_pos,
        overall_f1=correct / total,
        parse_failures=parse_failures,
        skipped=skipped,
        strategy=strategy if strategy is not None else predictions[0].strategy.value,
        dataset=dataset,
        timestamp=timestamp,
    )


@dataclass(frozen=True)
class EmbeddingScore:
    precision: float
    recall: float
    f1: float

    def __post_init__(self) -> None:
        for name in ("precision", "recall", "f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise errors.EvaluationError(f"{name} must lie in [0, 1], got {value}")


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def embedding_score(
    candidate_text: str, reference_text: str, backend: Embedder
) -> EmbeddingScore:
    """Greedy token-matching similarity between two texts.

    Precision averages, over candidate tokens, the best cosine against any
    reference token; recall mirrors it; F1 is their harmonic mean. Stopwords
    are retained and nothing is IDF-weighted or rescaled.
    """
    cand_tokens = word_tokens(candidate_text)
    ref_tokens = word_tokens(reference_text)
    if not cand_tokens or not ref_tokens:
        raise errors.EvaluationError("both texts must yield at least one token")
    vectors = backend.embed_texts(cand_tokens + ref_tokens)
    cand_vecs = vectors[: len(cand_tokens)]
    ref_vecs = vectors[len(cand_tokens):]

    def best(row, pool) -> float:
        return max(cosine(row, other) for other in pool)

    precision = _clamp01(sum(best(v, ref_vecs) for v in cand_vecs) / len(cand_vecs))
    recall = _clamp01(sum(best(v, cand_vecs) for v in ref_vecs) / len(ref_vecs))
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return EmbeddingScore(precision=precision, recall=recall, f1=_clamp01(f1))


@dataclass(frozen=True)
class PairedOutcomes:
    """Discordant/concordant counts for two systems on one paired set."""

    b: int  # A correct, B wrong
    c: int  # A wrong, B correct
    n_both_correct: int
    n_both_wrong: int

    def __post_init__(self) -> None:
        for name in ("b", "c", "n_both_correct", "n_both_wrong"):
            if getattr(self, name) < 0:
                raise errors.EvaluationError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.b + self.c + self.n_both_correct + self.n_both_wrong


def paired_outcomes(
    predictions_a: Sequence[Prediction],
    predictions_b: Sequence[Prediction],
    instances: Sequence[WsdInstance],
) -> PairedOutcomes:
    _check_alignment(predictions_a, instances)
    _check_alignment(predictions_b, instances)
    b = c = both_correct = both_wrong = 0
    for pa, pb, inst in zip(predictions_a, predictions_b, instances):
        ca, cb = _is_correct(pa, inst), _is_correct(pb, inst)
        if ca and cb:
            both_correct += 1
        elif ca:
            b += 1
        elif cb:
            c += 1
        else:
            both_wrong += 1
    return PairedOutcomes(b=b, c=c, n_both_correct=both_correct, n_both_wrong=both_wrong)


@dataclass(frozen=True)
class McNemarResult:
    statistic: float | None
    p_value: float
    method: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise errors.EvaluationError("p_value must lie in [0, 1]")


def _chi2_sf_1dof(x: float) -> float:
    # survival function of chi-squared with one degree of freedom
    return math.erfc(math.sqrt(x / 2.0))


def mcnemar(outcomes: PairedOutcomes, method: str | None = None) -> McNemarResult:
    """Two-sided McNemar test on the discordant counts.

    Below EXACT_THRESHOLD discordant pairs the exact binomial form is used;
    above it, the continuity-corrected chi-squared with one degree of
    freedom. `method` overrides the branch choice; zero discordance is
    always p = 1.0 regardless.
    """
    if method not in (None, METHOD_EXACT, METHOD_CHI2):
        raise errors.EvaluationError(f"unknown mcnemar method: {method!r}")
    b, c = outcomes.b, outcomes.c
    n = b + c
    if n == 0:
        return McNemarResult(statistic=None, p_value=1.0, method=METHOD_EXACT)
    use_exact = (n < EXACT_THRESHOLD) if method is None else (method == METHOD_EXACT)
    if use_exact:
        k = min(b, c)
        tail = sum(math.comb(n, i) for i in range(k + 1))
        p = min(1.0, 2.0 * tail / 2.0**n)
        return McNemarResult(statistic=None, p_value=p, method=METHOD_EXACT)
    # the continuity correction is clamped at zero so b == c cannot go negative
    statistic = max(abs(b - c) - 1, 0) ** 2 / n
    return McNemarResult(statistic=statistic, p_value=_chi2_sf_1dof(statistic), method=METHOD_CHI2)


def stars(p_value: float) -> str:
    """Significance marker: *** under 0.001, ** under 0.01, * under 0.05."""
    if p_value < 0.001:
        return "***"
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class FoolMeScore:
    source: str
    n: int
    correct: int
    f1: float


_FOOL_ME_SOURCES = (
    Source.FOOL_ME_SET1,
    Source.FOOL_ME_SET2,
    Source.FOOL_ME_SET3,
    Source.FOOL_ME_SET4,
)


def fool_me_score(
    predictions: Sequence[Prediction], instances: Sequence[WsdInstance]
) -> FoolMeScore:
    """Binary forced-choice accuracy for one adversarial set at a time."""
    if not instances:
        raise errors.EvaluationError("nothing to score")
    _check_alignment(predictions, instances)
    sources = {inst.source for inst in instances}
    if len(sources) > 1:
        raise errors.EvaluationError(
            "mixed sources in one scoring call; score each set separately"
        )
    source = sources.pop()
    if source not in _FOOL_ME_SOURCES:
        raise errors.EvaluationError(f"not an adversarial binary set: {source.value!r}")
    for inst in instances:
        if not inst.candidates or len(inst.candidates) != 2:
            raise errors.EvaluationError(
                f"instance {inst.instance_id!r} must carry exactly two candidates"
            )
        if not inst.gold_sense_id:
            raise errors.EvaluationError(f"instance {inst.instance_id!r} has no gold sense")
    correct = sum(1 for p, i in zip(predictions, instances) if _is_correct(p, i))
    return FoolMeScore(
        source=source.value,
        n=len(instances),
        correct=correct,
        f1=correct / len(instances),
    )


def check_expectations(report: EvalReport, expectations: Mapping) -> list[str]:
    """Compare a report against threshold expectations; return the misses.

    Supported keys: min_overall_f1, max_parse_failures, max_skipped,
    min_per_pos_f1 (a pos -> threshold map). Unknown keys are an error so
    typos cannot silently pass.
    """
    known = {"min_overall_f1", "max_parse_failures", "max_skipped", "min_per_pos_f1"}
    unknown = set(expectations) - known
    if unknown:
        raise errors.EvaluationError(f"unknown expectation keys: {sorted(unknown)}")
    misses: list[str] = []
    if "min_overall_f1" in expectations and report.overall_f1 < expectations["min_overall_f1"]:
        misses.append(
            f"overall_f1 {report.overall_f1:.4f} < required {expectations['min_overall_f1']}"
        )
    if "max_parse_failures" in expectations and report.parse_failures > expectations["max_parse_failures"]:
        misses.append(
            f"parse_failures {report.parse_failures} > allowed {expectations['max_parse_failures']}"
        )
    if "max_skipped" in expectations and report.skipped > expectations["max_skipped"]:
        misses.append(f"skipped {report.skipped} > allowed {expectations['max_skipped']}")
    for pos, threshold in expectations.get("min_per_pos_f1", {}).items():
        score = report.per_pos.get(pos)
        if score is None:
            misses.append(f"no {pos} items were scored but a threshold was set")
        elif score.f1 < threshold:
            misses.append(f"{pos} f1 {score.f1:.4f} < required {threshold}")
    return misses


_MARKDOWN_COLUMNS = (Pos.NOUN, Pos.VERB, Pos.ADJECTIVE, Pos.ADVERB)


def render_report_json(report: EvalReport) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render_report_markdown(report: EvalReport) -> str:
    def cell(pos: Pos, kind: str) -> str:
        score = report.per_pos.get(pos.value)
        if score is None:
            return "-"
        if kind == "f1":
            return f"{score.f1:.4f}"
        return str(getattr(score, kind))

    header = "| Metric | Noun | Verb | Adjective | Adverb | Overall |"
    rule = "| --- | --- | --- | --- | --- | --- |"
    f1_row = (
        "| F1 | "
        + " | ".join(cell(p, "f1") for p in _MARKDOWN_COLUMNS)
        + f" | {report.overall_f1:.4f} |"
    )
    n_row = (
        "| n | "
        + " | ".join(cell(p, "n") for p in _MARKDOWN_COLUMNS)
        + f" | {report.total} |"
    )
    correct_row = (
        "| correct | "
        + " | ".join(cell(p, "correct") for p in _MARKDOWN_COLUMNS)
        + f" | {report.total_correct} |"
    )
    title = f"# Evaluation: {report.dataset or 'unnamed'} / {report.strategy}"
    footer = f"Parse failures: {report.parse_failures}. Skipped: {report.skipped}."
    return "\n".join([title, "", header, rule, f1_row, n_row, correct_row, "", footer, ""])


def write_report(report: EvalReport, path: str | Path, format: str = "json") -> None:
    if format == "json":
        text = render_report_json(report)
    elif format == "markdown_table":
        text = render_report_markdown(report)
    else:
        raise errors.EvaluationError(f"unknown report format: {format!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
