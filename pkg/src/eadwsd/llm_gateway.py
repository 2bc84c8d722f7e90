"""Client for chat-completions endpoints, plus a scripted stand-in for tests.

The real gateway retries transient failures, bounds in-flight concurrency,
and persists every exchange to an append-only JSONL audit log before the
completion is handed back, so any run can be replayed from disk. The
scripted gateway answers from canned rules with the same interface and the
same audit trail, which keeps pipeline runs byte-reproducible offline.
"""

from __future__ import annotations

import itertools
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from . import errors
from .prompting import ChatRequest

API_KEY_ENV = "EADWSD_LLM_API_KEY"

# 429 and the 5xx family are worth retrying; other 4xx are caller mistakes
RETRYABLE_STATUSES = frozenset({429})


def _is_retryable(status: int) -> bool:
    return status in RETRYABLE_STATUSES or 500 <= status <= 599


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class Completion:
    request_id: str
    text: str
    finish_reason: FinishReason
    latency_ms: int
    attempts: int
    raw_status: int | None = None

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise errors.GatewayError("attempts must be >= 1")
        if self.latency_ms < 0:
            raise errors.GatewayError("latency_ms must be >= 0")
        if not self.text and self.finish_reason is not FinishReason.ERROR:
            raise errors.GatewayError("empty text is only valid on error completions")

    @property
    def ok(self) -> bool:
        return self.finish_reason is not FinishReason.ERROR


# wire key -> JudgeScores field
_SCORE_KEYS = {
    "contextual_analysis_score": "contextual_analysis",
    "justification_accuracy_score": "justification_accuracy",
    "elimination_completeness_score": "elimination_completeness",
    "coherence_score": "coherence",
}


@dataclass(frozen=True)
class JudgeScores:
    """The four judged rubric dimensions, each an integer from 1 to 5."""

    contextual_analysis: int
    justification_accuracy: int
    elimination_completeness: int
    coherence: int

    def __post_init__(self) -> None:
        for name in (
            "contextual_analysis",
            "justification_accuracy",
            "elimination_completeness",
            "coherence",
        ):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise errors.JudgeParseError(f"score {name} must be an integer, got {value!r}")
            if not 1 <= value <= 5:
                raise errors.JudgeParseError(f"score {name} out of range [1,5]: {value}")

    def as_dict(self) -> dict[str, int]:
        """Scores keyed by their wire names."""
        return {wire: getattr(self, attr) for wire, attr in _SCORE_KEYS.items()}

    def to_json(self) -> str:
        return json.dumps(self.as_dict())

    def min_score(self) -> int:
        return min(self.as_dict().values())


@dataclass(frozen=True)
class GatewayPolicy:
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff_initial_ms: int = 500
    timeout_s: float = 120.0

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise errors.ConfigError("max_in_flight must be >= 1")
        if self.max_attempts < 1:
            raise errors.ConfigError("max_attempts must be >= 1")
        if self.backoff_initial_ms < 1:
            raise errors.ConfigError("backoff_initial_ms must be >= 1")
        if self.timeout_s <= 0:
            raise errors.ConfigError("timeout_s must be positive")


def parse_judge_json(text: str) -> JudgeScores:
    """Extract and validate the first JSON object in a judge completion.

    Tolerates code fences and surrounding prose: the text is scanned for the
    first position where a JSON object actually decodes.
    """
    decoder = json.JSONDecoder()
    idx = 0
    while True:
        start = text.find("{", idx)
        if start == -1:
            raise errors.JudgeParseError("no JSON object found in judge output")
        try:
            obj, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            idx = start + 1
            continue
        if not isinstance(obj, dict):
            idx = start + 1
            continue
        return _scores_from_mapping(obj)


def _scores_from_mapping(obj: Mapping) -> JudgeScores:
    kwargs: dict[str, int] = {}
    for wire_key, attr in _SCORE_KEYS.items():
        if wire_key not in obj:
            raise errors.JudgeParseError(f"judge output missing key {wire_key!r}")
        value = obj[wire_key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise errors.JudgeParseError(
                f"judge key {wire_key!r} must be an integer, got {value!r}"
            )
        if not 1 <= value <= 5:
            raise errors.JudgeParseError(f"judge key {wire_key!r} out of range [1,5]: {value}")
        kwargs[attr] = value
    return JudgeScores(**kwargs)


class _AuditLog:
    """Append-only JSONL sink with serialized writes; a None path is a no-op."""

    def __init__(self, path: str | Path | None) -> None:
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, record: dict) -> None:
        if self._path is None:
            return
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def _audit_record(
    request_id: str,
    model: str,
    req: ChatRequest,
    completion: Completion,
) -> dict:
    return {
        "request_id": request_id,
        "ts": datetime.now(timezone.utc).isoformat(),
        "model": model,
        "messages": [{"role": m.role.value, "content": m.content} for m in req.messages],
        "params": {
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
            "model": req.params.model,
        },
        "response_text": completion.text,
        "finish_reason": completion.finish_reason.value,
        "attempts": completion.attempts,
        "latency_ms": completion.latency_ms,
    }


class LlmGateway:
    """Thread-safe client for a chat-completions endpoint.

    Retries are limited to transport errors, HTTP 429, and the 5xx family;
    other statuses fail the request on the first response. Batch results are
    aligned with their inputs by request id, never by completion order.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        policy: GatewayPolicy | None = None,
        audit_log_path: str | Path | None = None,
        api_key: str | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not base_url:
            raise errors.ConfigError("gateway base_url must be non-empty")
        if not model:
            raise errors.ConfigError("gateway model must be non-empty")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.policy = policy if policy is not None else GatewayPolicy()
        self._audit = _AuditLog(audit_log_path)
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._client = client if client is not None else httpx.Client()
        self._sleep = sleep
        self._ids = itertools.count(1)
        self._id_lock = threading.Lock()

    def _next_id(self) -> str:
        with self._id_lock:
            return f"req-{next(self._ids):06d}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def complete(self, req: ChatRequest, policy: GatewayPolicy | None = None) -> Completion:
        """Send one request; raises GatewayProtocolError on malformed bodies."""
        completion, protocol_error = self._execute(req, self._next_id(), policy or self.policy)
        if protocol_error is not None:
            raise protocol_error
        return completion

    def complete_batch(
        self, reqs: Sequence[ChatRequest], policy: GatewayPolicy | None = None
    ) -> list[Completion]:
        """Complete many requests with bounded concurrency.

        Per-item failures (including protocol errors) become error
        completions; the batch itself never aborts.
        """
        if not reqs:
            raise errors.GatewayError("batch must be non-empty")
        policy = policy or self.policy
        request_ids = [self._next_id() for _ in reqs]

        def run(i: int) -> Completion:
            completion, _ = self._execute(reqs[i], request_ids[i], policy)
            return completion

        with ThreadPoolExecutor(max_workers=policy.max_in_flight) as pool:
            return list(pool.map(run, range(len(reqs))))

    def _execute(
        self, req: ChatRequest, request_id: str, policy: GatewayPolicy
    ) -> tuple[Completion, errors.GatewayProtocolError | None]:
        payload = {
            "model": req.params.model or self.model,
            "messages": [{"role": m.role.value, "content": m.content} for m in req.messages],
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        start = time.monotonic()
        attempts = 0
        last_status: int | None = None
        protocol_error: errors.GatewayProtocolError | None = None
        text = ""
        finish = FinishReason.ERROR

        while attempts < policy.max_attempts:
            attempts += 1
            try:
                response = self._client.post(
                    url, json=payload, headers=self._headers(), timeout=policy.timeout_s
                )
                last_status = response.status_code
            except httpx.HTTPError:
                if attempts >= policy.max_attempts:
                    break
                self._back_off(policy, attempts)
                continue

            if last_status == 200:
                try:
                    text, finish = _parse_completion_body(response)
                except errors.GatewayProtocolError as exc:
                    protocol_error = exc
                    text, finish = "", FinishReason.ERROR
                break
            if not _is_retryable(last_status) or attempts >= policy.max_attempts:
                break
            self._back_off(policy, attempts)

        latency_ms = int((time.monotonic() - start) * 1000)
        completion = Completion(
            request_id=request_id,
            text=text,
            finish_reason=finish,
            latency_ms=latency_ms,
            attempts=attempts,
            raw_status=last_status,
        )
        # write-ahead: the exchange is durable before the caller sees it
        self._audit.write(_audit_record(request_id, payload["model"], req, completion))
        return completion, protocol_error

    def _back_off(self, policy: GatewayPolicy, attempt: int) -> None:
        self._sleep(policy.backoff_initial_ms / 1000.0 * 2 ** (attempt - 1))


def _parse_completion_body(response: httpx.Response) -> tuple[str, FinishReason]:
    try:
        body = response.json()
    except (json.JSONDecodeError, ValueError) as exc:
        raise errors.GatewayProtocolError("completion body is not valid JSON") from exc
    try:
        choice = body["choices"][0]
        content = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise errors.GatewayProtocolError("completion body missing choices[0].message.content") from exc
    if not isinstance(content, str) or not content:
        raise errors.GatewayProtocolError("completion content is empty")
    finish = choice.get("finish_reason", "stop")
    return content, FinishReason.LENGTH if finish == "length" else FinishReason.STOP


@dataclass(frozen=True)
class ScriptedRule:
    """Canned answer chosen when `when_contains` occurs in any message."""

    when_contains: str
    text: str
    finish_reason: FinishReason = FinishReason.STOP


class ScriptedGateway:
    """Deterministic in-process gateway double.

    Answers are selected by matching rules first, then by submission index
    into the positional response list, so batches reproduce byte-for-byte
    regardless of scheduling. Exhausted scripts yield error completions.
    """

    def __init__(
        self,
        responses: Sequence[str | tuple[str, FinishReason]] | None = None,
        rules: Sequence[ScriptedRule] | None = None,
        default_text: str | None = None,
        audit_log_path: str | Path | None = None,
        model: str = "scripted",
        policy: GatewayPolicy | None = None,
    ) -> None:
        self.model = model
        self.policy = policy if policy is not None else GatewayPolicy()
        self._responses = list(responses or [])
        self._rules = list(rules or [])
        self._default_text = default_text
        self._audit = _AuditLog(audit_log_path)
        self._counter = itertools.count()
        self._positional = 0
        self._lock = threading.Lock()
        self.calls: list[ChatRequest] = []

    def _pick(self, req: ChatRequest) -> tuple[str, FinishReason]:
        """Rules are a side channel; only unmatched requests consume the script."""
        for rule in self._rules:
            if any(rule.when_contains in m.content for m in req.messages):
                return rule.text, rule.finish_reason
        index = self._positional
        self._positional += 1
        if index < len(self._responses):
            entry = self._responses[index]
            if isinstance(entry, tuple):
                return entry
            return entry, FinishReason.STOP
        if self._default_text is not None:
            return self._default_text, FinishReason.STOP
        return "", FinishReason.ERROR

    def _answer(self, req: ChatRequest) -> Completion:
        with self._lock:
            index = next(self._counter)
            self.calls.append(req)
            text, finish = self._pick(req)
        completion = Completion(
            request_id=f"req-{index + 1:06d}",
            text=text,
            finish_reason=finish,
            latency_ms=0,
            attempts=1,
            raw_status=200 if finish is not FinishReason.ERROR else None,
        )
        self._audit.write(
            _audit_record(completion.request_id, req.params.model or self.model, req, completion)
        )
        return completion

    def complete(self, req: ChatRequest, policy: GatewayPolicy | None = None) -> Completion:
        return self._answer(req)

    def complete_batch(
        self, reqs: Sequence[ChatRequest], policy: GatewayPolicy | None = None
    ) -> list[Completion]:
        if not reqs:
            raise errors.GatewayError("batch must be non-empty")
        # sequential on purpose: submission order is the only order that exists
        return [self._answer(req) for req in reqs]
