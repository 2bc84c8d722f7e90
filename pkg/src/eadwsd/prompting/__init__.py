"""Prompt construction for disambiguation, rationale generation, and judging.

Every prompt is rendered from a UTF-8 template asset with ``{slot}``
placeholders. Rendering is pure: equal inputs yield byte-equal requests, and
candidate senses keep their inventory order. The advanced, verb, and judge
instruction blocks ship with golden copies under ``prompts/golden/`` so tests
can assert byte identity; the direct and CoT templates are authored in-repo.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

from .. import errors
from ..context import ContextFeatures
from ..corpus import Pos, SenseEntry, SenseInventory, WsdInstance

__all__ = [
    "ChatMessage",
    "ChatRequest",
    "DEFAULT_PARAMS",
    "GenerationParams",
    "NO_EXAMPLES_LINE",
    "NO_NEIGHBOURS_LINE",
    "PromptKind",
    "Role",
    "examples_kb",
    "format_candidates",
    "format_neighbours",
    "load_template",
    "render_advanced",
    "render_advanced_inference",
    "render_cot_neighbour",
    "render_direct",
    "render_fewshot_block",
    "render_golden",
    "render_judge",
    "render_slots",
    "render_verb",
    "render_verb_inference",
]


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class PromptKind(str, Enum):
    """The prompt families the toolkit can render."""

    DIRECT = "direct"
    COT_NEIGHBOUR = "cot_neighbour"
    ADVANCED_REASONING = "advanced_reasoning"
    VERB_REASONING = "verb_reasoning"
    JUDGE = "judge"
    FEWSHOT_COT = "fewshot_cot"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if not isinstance(self.role, Role):
            try:
                object.__setattr__(self, "role", Role(self.role))
            except ValueError as exc:
                raise errors.PromptError(f"unknown chat role: {self.role!r}") from exc
        if not self.content:
            raise errors.PromptError("chat message content must be non-empty")


@dataclass(frozen=True)
class GenerationParams:
    """Decoding parameters attached to a request.

    Temperature defaults to 0.0 so inference and judging stay reproducible.
    An empty model string means "use the gateway's configured model".
    """

    temperature: float = 0.0
    max_tokens: int = 1024
    model: str = ""

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise errors.PromptError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise errors.PromptError("max_tokens must be >= 1")


DEFAULT_PARAMS = GenerationParams()


@dataclass(frozen=True)
class ChatRequest:
    """An ordered chat transcript: one system message, then user turns."""

    messages: tuple[ChatMessage, ...]
    params: GenerationParams = field(default=DEFAULT_PARAMS)

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise errors.PromptError("request needs at least one message")
        if self.messages[0].role is not Role.SYSTEM:
            raise errors.PromptError("first message must have the system role")
        if not any(m.role is Role.USER for m in self.messages):
            raise errors.PromptError("request needs at least one user message")

    @property
    def system_text(self) -> str:
        return self.messages[0].content

    @property
    def user_text(self) -> str:
        """Content of the last user message (the task payload)."""
        for msg in reversed(self.messages):
            if msg.role is Role.USER:
                return msg.content
        raise errors.PromptError("request has no user message")


_TEMPLATES = resources.files(__package__) / "templates"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Return a template asset by bare name, minus its trailing newline."""
    try:
        text = (_TEMPLATES / f"{name}.txt").read_text(encoding="utf-8")
    except (FileNotFoundError, OSError) as exc:
        raise errors.PromptError(f"unknown prompt template: {name!r}") from exc
    return text[:-1] if text.endswith("\n") else text


_SLOT_RE = re.compile(r"\{([a-z_]+)\}")


def render_slots(template: str, values: Mapping[str, str]) -> str:
    """Substitute ``{slot}`` placeholders in a single pass.

    Inserted values are never rescanned and unknown placeholders stay
    literal, so brace-bearing payloads survive untouched.
    """

    def _sub(match: re.Match[str]) -> str:
        key = match.group(1)
        return values[key] if key in values else match.group(0)

    return _SLOT_RE.sub(_sub, template)


def format_candidates(candidates: Sequence[SenseEntry]) -> str:
    """One ``- sense_id: gloss`` line per candidate, order preserved."""
    return "\n".join(f"- {c.sense_id}: {c.gloss}" for c in candidates)


NO_NEIGHBOURS_LINE = "(no salient neighbouring words)"


def format_neighbours(tokens: Sequence[str]) -> str:
    if not tokens:
        return NO_NEIGHBOURS_LINE
    return "\n".join(f"{i}. {tok}" for i, tok in enumerate(tokens, start=1))


def _params(params: GenerationParams | None) -> GenerationParams:
    return DEFAULT_PARAMS if params is None else params


def _request(system: str, user: str, params: GenerationParams | None) -> ChatRequest:
    return ChatRequest(
        messages=(ChatMessage(Role.SYSTEM, system), ChatMessage(Role.USER, user)),
        params=_params(params),
    )


def _require_gold(candidates: Sequence[SenseEntry], gold: str) -> None:
    if gold not in {c.sense_id for c in candidates}:
        raise errors.PromptError(f"expected sense id {gold!r} is not among the candidates")


def render_direct(
    instance: WsdInstance,
    candidates: Sequence[SenseEntry] | None = None,
    params: GenerationParams | None = None,
) -> ChatRequest:
    """Definition-production prompt.

    Pass ``candidates`` to list the sense options inline, as the inference
    pipeline does; the training-data builder omits them.
    """
    if not instance.plain_sentence.strip():
        raise errors.PromptError("instance sentence is empty once markers are stripped")
    user = render_slots(
        load_template("direct_user"),
        {"sentence": instance.sentence, "target": instance.target_surface},
    )
    if candidates:
        block = format_candidates(candidates)
        user = f"{user}\n\nPossible sense IDs and definitions:\n{block}"
    return _request(load_template("direct_system"), user, params)


def render_cot_neighbour(
    instance: WsdInstance,
    features: ContextFeatures,
    candidates: Sequence[SenseEntry],
    fewshot_block: str | None = None,
    params: GenerationParams | None = None,
) -> ChatRequest:
    """Neighbour-word reasoning prompt ending in the ``Sense ID:`` contract."""
    if not candidates:
        raise errors.PromptError("cot_neighbour prompt needs at least one candidate sense")
    user = render_slots(
        load_template("cot_user"),
        {
            "sentence": instance.sentence,
            "target": instance.target_surface,
            "candidates": format_candidates(candidates),
            "neighbours": format_neighbours(features.top_k_tokens),
        },
    )
    if fewshot_block:
        user = f"{user}\n\n{fewshot_block}"
    return _request(load_template("cot_system"), user, params)


def render_advanced(
    instance: WsdInstance,
    candidates: Sequence[SenseEntry],
    gold: str,
    params: GenerationParams | None = None,
) -> ChatRequest:
    """Rationale-generation prompt: the gold sense is revealed on purpose."""
    _require_gold(candidates, gold)
    user = render_slots(
        load_template("advanced_user"),
        {
            "sentence": instance.sentence,
            "target": instance.target_surface,
            "candidates": format_candidates(candidates),
            "gold": gold,
        },
    )
    return _request(load_template("advanced_system"), user, params)


def render_advanced_inference(
    instance: WsdInstance,
    candidates: Sequence[SenseEntry],
    params: GenerationParams | None = None,
) -> ChatRequest:
    """Gold-free variant of the advanced prompt, for inference."""
    if not candidates:
        raise errors.PromptError("advanced inference prompt needs at least one candidate")
    user = render_slots(
        load_template("advanced_inference_user"),
        {
            "sentence": instance.sentence,
            "target": instance.target_surface,
            "candidates": format_candidates(candidates),
        },
    )
    return _request(load_template("advanced_inference_system"), user, params)


def render_verb_inference(
    instance: WsdInstance,
    candidates: Sequence[SenseEntry],
    params: GenerationParams | None = None,
) -> ChatRequest:
    """Gold-free variant of the verb prompt, for inference and training input."""
    if instance.pos is not Pos.VERB:
        raise errors.PromptError(
            f"verb prompt requires a verb instance, got pos={instance.pos.value!r}"
        )
    if not candidates:
        raise errors.PromptError("verb inference prompt needs at least one candidate")
    user = render_slots(
        load_template("verb_inference_user"),
        {
            "sentence": instance.sentence,
            "target": instance.target_surface,
            "candidates": format_candidates(candidates),
        },
    )
    return _request(load_template("verb_inference_system"), user, params)


def render_verb(
    instance: WsdInstance,
    candidates: Sequence[SenseEntry],
    gold: str,
    params: GenerationParams | None = None,
) -> ChatRequest:
    """Verb-specific rationale prompt; rejects non-verb instances."""
    if instance.pos is not Pos.VERB:
        raise errors.PromptError(
            f"verb prompt requires a verb instance, got pos={instance.pos.value!r}"
        )
    _require_gold(candidates, gold)
    # the verb variant shares the rationale user scaffold with the advanced one
    user = render_slots(
        load_template("advanced_user"),
        {
            "sentence": instance.sentence,
            "target": instance.target_surface,
            "candidates": format_candidates(candidates),
            "gold": gold,
        },
    )
    return _request(load_template("verb_system"), user, params)


def render_judge(
    input_text: str,
    sense_id: str,
    reasoning: str,
    params: GenerationParams | None = None,
) -> ChatRequest:
    """Four-dimension scoring prompt for a generated rationale."""
    for label, value in (
        ("input_text", input_text),
        ("sense_id", sense_id),
        ("reasoning", reasoning),
    ):
        if not value or not value.strip():
            raise errors.PromptError(f"judge prompt argument {label!r} must be non-empty")
    user = render_slots(
        load_template("judge_user"),
        {"input_text": input_text, "senseid": sense_id, "reasoning": reasoning},
    )
    return _request(load_template("judge_system"), user, params)


NO_EXAMPLES_LINE = "(no examples available)"


def render_fewshot_block(
    candidates: Sequence[SenseEntry], kb: Mapping[str, Sequence[str]]
) -> str:
    """Illustrative-usage block: up to two examples per candidate, store order."""
    lines: list[str] = ["Examples of each sense in use:"]
    for cand in candidates:
        lines.append(f"- {cand.sense_id}: {cand.gloss}")
        shots = list(kb.get(cand.sense_id, ()))[:2]
        if shots:
            lines.extend(f"  Example: {shot}" for shot in shots)
        else:
            lines.append(f"  {NO_EXAMPLES_LINE}")
    return "\n".join(lines)


def examples_kb(inventory: SenseInventory) -> dict[str, tuple[str, ...]]:
    """Build a sense-id keyed example store from an inventory."""
    return {entry.sense_id: entry.examples for entry in inventory.entries}


def render_golden(kind: PromptKind | str) -> str:
    """Canonical instruction text for the prompts shipped with golden copies.

    Golden copies flatten a request as ``system + "\\n\\n" + user`` with empty
    slot values; for the advanced and verb prompts the instruction block is
    the whole system message, so the flattening reduces to it.
    """
    try:
        kind = PromptKind(kind)
    except ValueError as exc:
        raise errors.PromptError(f"unknown prompt kind: {kind!r}") from exc
    if kind is PromptKind.ADVANCED_REASONING:
        return load_template("advanced_system")
    if kind is PromptKind.VERB_REASONING:
        return load_template("verb_system")
    if kind is PromptKind.JUDGE:
        empty = {"input_text": "", "senseid": "", "reasoning": ""}
        user = render_slots(load_template("judge_user"), empty)
        return load_template("judge_system") + "\n\n" + user
    raise errors.PromptError(f"no golden copy for prompt kind {kind.value!r}")
