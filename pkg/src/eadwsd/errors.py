"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class EadwsdError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(EadwsdError):
    """Invalid or incomplete configuration."""


class InventoryLoadError(EadwsdError):
    """A sense inventory file violates its contract (aborts the load)."""


class InstanceError(EadwsdError):
    """A single WSD instance violates its invariants."""


class MarkerError(InstanceError):
    """Sentence does not contain exactly one well-formed <WSD>...</WSD> pair."""


class SamplingError(EadwsdError):
    """Stratified sampling cannot satisfy the requested spec."""


class EmbeddingError(EadwsdError):
    """Embedding backend failure."""


class EmbeddingTransportError(EmbeddingError):
    """Remote embedding call failed after retries."""

    def __init__(self, message: str, status: int | None = None, attempts: int = 0):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class EmbeddingContractError(EmbeddingError):
    """Remote embedding response violates the wire contract."""


class GatewayError(EadwsdError):
    """Chat-completion gateway failure."""


class GatewayProtocolError(GatewayError):
    """Endpoint returned a body that does not match the chat-completions shape."""


class JudgeParseError(EadwsdError):
    """Judge output does not contain a valid score object."""


class PromptError(EadwsdError):
    """Prompt rendering precondition violated."""


class DatagenError(EadwsdError):
    """Dataset build or export failure."""


class ReviewError(EadwsdError):
    """Review-store operation rejected."""


class EvaluationError(EadwsdError):
    """Scoring input mismatch or malformed report request."""
