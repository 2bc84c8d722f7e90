"""Three-phase inference pipeline: explore, analyze, disambiguate.

Exploration gathers the candidate senses for an instance (optionally with a
few-shot example block). Analysis sends one reasoning prompt per instance
through the gateway, short-circuiting singleton candidate sets without a
model call. Disambiguation extracts the predicted sense id from the
completion with a strict precedence ladder: a terminal ``Sense ID:`` line
wins, then the last sense id mentioned in the body, then the gloss nearest
the completion under the embedding backend, and only then failure.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import errors, prompting
from .context import ContextConfig, extract_features
from .corpus import SenseEntry, SenseInventory, WsdInstance, candidate_senses
from .embedding import Embedder, cosine
from .llm_gateway import Completion, FinishReason
from .prompting import ChatMessage, ChatRequest, GenerationParams, Role

SHORT_CIRCUIT_MARKER = "Short-circuit: only one candidate sense."


class Mode(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"


class Strategy(str, Enum):
    DIRECT = "direct"
    COT_NEIGHBOUR = "cot_neighbour"
    ADVANCED = "advanced"


class ParseStatus(str, Enum):
    SENTINEL = "sentinel"
    BODY_MATCH = "body_match"
    GLOSS_FALLBACK = "gloss_fallback"
    FAILURE = "failure"


@dataclass(frozen=True)
class CandidateSet:
    """Exploration output; an empty `senses` means the instance is skipped."""

    instance_id: str
    senses: tuple[SenseEntry, ...]
    fewshot_block: str | None = None
    mode: Mode = Mode.ZERO_SHOT
    skip_reason: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "senses", tuple(self.senses))
        if (self.mode is Mode.FEW_SHOT) != (self.fewshot_block is not None):
            raise errors.InstanceError("fewshot_block must be present exactly in few-shot mode")

    @property
    def analyzable(self) -> bool:
        return bool(self.senses)

    @property
    def sense_ids(self) -> tuple[str, ...]:
        return tuple(s.sense_id for s in self.senses)


@dataclass(frozen=True)
class Prediction:
    instance_id: str
    predicted_sense_id: str | None
    parse_status: ParseStatus
    raw_text: str
    strategy: Strategy
    latency_ms: int
    skip_reason: str | None = None

    def __post_init__(self) -> None:
        if (self.predicted_sense_id is None) != (self.parse_status is ParseStatus.FAILURE):
            raise errors.InstanceError(
                "predicted_sense_id must be present exactly when parsing succeeded"
            )

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "predicted": self.predicted_sense_id,
            "status": self.parse_status.value,
            "strategy": self.strategy.value,
            "raw_text": self.raw_text,
            "skip_reason": self.skip_reason,
        }


def explore(
    instance: WsdInstance,
    inventory: SenseInventory,
    kb: Mapping[str, Sequence[str]] | None = None,
    mode: Mode | str = Mode.ZERO_SHOT,
) -> CandidateSet:
    """Gather candidate senses; instances with stored candidates are restricted to them.

    Unanalyzable instances come back with empty senses and a skip reason
    (always zero-shot: there is nothing to illustrate).
    """
    mode = Mode(mode)
    if instance.candidates:
        missing = [cid for cid in instance.candidates if cid not in inventory.by_id]
        if missing:
            return CandidateSet(
                instance.instance_id,
                (),
                skip_reason=f"stored candidates not in inventory: {', '.join(missing)}",
            )
        senses = tuple(inventory.by_id[cid] for cid in instance.candidates)
    else:
        senses = tuple(candidate_senses(inventory, instance.lemma, instance.pos))
    if not senses:
        return CandidateSet(
            instance.instance_id,
            (),
            skip_reason=(
                f"no candidate senses for lemma {instance.lemma!r} pos {instance.pos.value!r}"
            ),
        )
    if mode is Mode.FEW_SHOT:
        if kb is None:
            raise errors.ConfigError("few-shot mode requires an example store")
        block = prompting.render_fewshot_block(senses, kb)
        return CandidateSet(instance.instance_id, senses, block, Mode.FEW_SHOT)
    return CandidateSet(instance.instance_id, senses)


def _with_fewshot(req: ChatRequest, block: str) -> ChatRequest:
    """Append the example block to the last user message."""
    messages = list(req.messages)
    for i in range(len(messages) - 1, -1, -1):
        if messages[i].role is Role.USER:
            messages[i] = ChatMessage(Role.USER, f"{messages[i].content}\n\n{block}")
            break
    return ChatRequest(tuple(messages), req.params)


def _build_request(
    instance: WsdInstance,
    cands: CandidateSet,
    strategy: Strategy,
    backend: Embedder | None,
    cfg: ContextConfig,
    params: GenerationParams | None,
) -> ChatRequest:
    if strategy is Strategy.COT_NEIGHBOUR:
        if backend is None:
            raise errors.ConfigError("cot_neighbour strategy requires an embedding backend")
        features = extract_features(instance, cfg, backend)
        req = prompting.render_cot_neighbour(instance, features, cands.senses, params=params)
    elif strategy is Strategy.DIRECT:
        req = prompting.render_direct(instance, candidates=cands.senses, params=params)
    elif strategy is Strategy.ADVANCED:
        req = prompting.render_advanced_inference(instance, cands.senses, params=params)
    else:  # pragma: no cover - enum is closed
        raise errors.ConfigError(f"unknown strategy: {strategy!r}")
    if cands.fewshot_block:
        req = _with_fewshot(req, cands.fewshot_block)
    return req


def _short_circuit(instance_id: str, only_id: str) -> Completion:
    return Completion(
        request_id=f"local:{instance_id}",
        text=f"{SHORT_CIRCUIT_MARKER}\nSense ID: {only_id}",
        finish_reason=FinishReason.STOP,
        latency_ms=0,
        attempts=1,
    )


def _failure_completion(instance_id: str) -> Completion:
    return Completion(
        request_id=f"error:{instance_id}",
        text="",
        finish_reason=FinishReason.ERROR,
        latency_ms=0,
        attempts=1,
    )


def analyze(
    instance: WsdInstance,
    cands: CandidateSet,
    strategy: Strategy | str,
    gateway,
    backend: Embedder | None = None,
    cfg: ContextConfig | None = None,
    params: GenerationParams | None = None,
) -> Completion:
    """Run one reasoning call; gateway and backend problems become error completions."""
    strategy = Strategy(strategy)
    if not cands.analyzable:
        raise errors.InstanceError("cannot analyze an empty candidate set")
    if len(cands.senses) == 1:
        return _short_circuit(cands.instance_id, cands.senses[0].sense_id)
    try:
        req = _build_request(instance, cands, strategy, backend, cfg or ContextConfig(), params)
        return gateway.complete(req)
    except errors.ConfigError:
        raise
    except errors.EadwsdError:
        return _failure_completion(cands.instance_id)


_SENTINEL = "Sense ID:"
_TRAILING_PUNCT = ".,;:!?"


def _sentinel_parse(text: str, valid_ids: frozenset[str] | set[str]) -> str | None:
    for line in reversed(text.splitlines()):
        idx = line.rfind(_SENTINEL)
        if idx == -1:
            continue
        tail = line[idx + len(_SENTINEL):].strip()
        if not tail:
            continue
        stripped = tail.strip("*`_")
        for candidate in (
            tail,
            tail.rstrip(_TRAILING_PUNCT),
            stripped,
            stripped.rstrip(_TRAILING_PUNCT),
        ):
            if candidate in valid_ids:
                return candidate
    return None


# a sense id mention counts only when not embedded in a larger id-like token
_ID_BOUNDARY = r"[A-Za-z0-9._\-]"


def _body_match(text: str, senses: Sequence[SenseEntry]) -> str | None:
    best: tuple[int, int, str] | None = None  # (start, length, sense_id)
    for entry in senses:
        pattern = re.compile(
            rf"(?<!{_ID_BOUNDARY}){re.escape(entry.sense_id)}(?!{_ID_BOUNDARY})"
        )
        for match in pattern.finditer(text):
            key = (match.start(), len(entry.sense_id), entry.sense_id)
            if best is None or key[0] > best[0] or (key[0] == best[0] and key[1] > best[1]):
                best = key
    return best[2] if best else None


def _gloss_fallback(text: str, senses: Sequence[SenseEntry], backend: Embedder) -> str | None:
    try:
        vectors = backend.embed_texts([text] + [s.gloss for s in senses])
    except errors.EadwsdError:
        return None
    target = vectors[0]
    best_id: str | None = None
    best_sim = float("-inf")
    for entry, vector in zip(senses, vectors[1:]):
        try:
            sim = cosine(target, vector)
        except errors.EmbeddingError:
            continue
        if sim > best_sim:  # strict: ties keep the earliest candidate
            best_id, best_sim = entry.sense_id, sim
    return best_id


def disambiguate(
    completion: Completion,
    cands: CandidateSet,
    strategy: Strategy | str,
    backend: Embedder | None = None,
) -> Prediction:
    """Apply the parse ladder to one completion."""
    strategy = Strategy(strategy)
    if not cands.analyzable:
        raise errors.InstanceError("cannot disambiguate against an empty candidate set")
    base = {
        "instance_id": cands.instance_id,
        "raw_text": completion.text,
        "strategy": strategy,
        "latency_ms": completion.latency_ms,
    }
    if completion.finish_reason is FinishReason.ERROR or not completion.text:
        return Prediction(
            predicted_sense_id=None,
            parse_status=ParseStatus.FAILURE,
            skip_reason="analysis failed upstream",
            **base,
        )
    valid = {s.sense_id for s in cands.senses}
    sense_id = _sentinel_parse(completion.text, valid)
    if sense_id is not None:
        return Prediction(predicted_sense_id=sense_id, parse_status=ParseStatus.SENTINEL, **base)
    sense_id = _body_match(completion.text, cands.senses)
    if sense_id is not None:
        return Prediction(predicted_sense_id=sense_id, parse_status=ParseStatus.BODY_MATCH, **base)
    if backend is not None:
        sense_id = _gloss_fallback(completion.text, cands.senses, backend)
        if sense_id is not None:
            return Prediction(
                predicted_sense_id=sense_id, parse_status=ParseStatus.GLOSS_FALLBACK, **base
            )
    return Prediction(predicted_sense_id=None, parse_status=ParseStatus.FAILURE, **base)


def run_pipeline(
    instances: Sequence[WsdInstance],
    inventory: SenseInventory,
    strategy: Strategy | str,
    gateway,
    backend: Embedder | None = None,
    cfg: ContextConfig | None = None,
    mode: Mode | str = Mode.ZERO_SHOT,
    kb: Mapping[str, Sequence[str]] | None = None,
    params: GenerationParams | None = None,
) -> list[Prediction]:
    """Explore, analyze, and disambiguate a corpus; one aligned prediction each.

    Reasoning calls go through ``complete_batch`` so the gateway's in-flight
    bound applies; skips and singletons never reach the gateway.
    """
    strategy = Strategy(strategy)
    mode = Mode(mode)
    cfg = cfg or ContextConfig()
    if strategy is Strategy.COT_NEIGHBOUR and backend is None:
        raise errors.ConfigError("cot_neighbour strategy requires an embedding backend")

    candsets = [explore(inst, inventory, kb=kb, mode=mode) for inst in instances]
    completions: list[Completion | None] = [None] * len(instances)
    outbound: list[tuple[int, ChatRequest]] = []
    for i, (inst, cands) in enumerate(zip(instances, candsets)):
        if not cands.analyzable:
            continue
        if len(cands.senses) == 1:
            completions[i] = _short_circuit(cands.instance_id, cands.senses[0].sense_id)
            continue
        try:
            outbound.append((i, _build_request(inst, cands, strategy, backend, cfg, params)))
        except errors.EadwsdError:
            completions[i] = _failure_completion(cands.instance_id)

    if outbound:
        batch = gateway.complete_batch([req for _, req in outbound])
        for (i, _), completion in zip(outbound, batch):
            completions[i] = completion

    predictions: list[Prediction] = []
    for inst, cands, completion in zip(instances, candsets, completions):
        if not cands.analyzable:
            predictions.append(
                Prediction(
                    instance_id=inst.instance_id,
                    predicted_sense_id=None,
                    parse_status=ParseStatus.FAILURE,
                    raw_text="",
                    strategy=strategy,
                    latency_ms=0,
                    skip_reason=cands.skip_reason,
                )
            )
            continue
        assert completion is not None
        predictions.append(disambiguate(completion, cands, strategy, backend=backend))
    return predictions


def dump_predictions(predictions: Iterable[Prediction], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(json.dumps(pred.to_dict(), ensure_ascii=False) + "\n")


def load_predictions(path: str | Path) -> list[Prediction]:
    """Read a prediction JSONL file back; latency is not persisted."""
    path = Path(path)
    predictions: list[Prediction] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            predictions.append(
                Prediction(
                    instance_id=obj["instance_id"],
                    predicted_sense_id=obj["predicted"],
                    parse_status=ParseStatus(obj["status"]),
                    raw_text=obj.get("raw_text", ""),
                    strategy=Strategy(obj["strategy"]),
                    latency_ms=0,
                    skip_reason=obj.get("skip_reason"),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError, errors.InstanceError) as exc:
            raise errors.EvaluationError(f"{path}:{lineno}: bad prediction line: {exc}") from exc
    return predictions
